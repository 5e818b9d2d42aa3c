"""The ten acceptance criteria at their stated tolerances.

Each test records a one-line verdict (printed in the terminal summary and
echoed to stdout) before asserting.
"""

import time

import numpy as np
import pytest

import gradcases
from conftest import ACCEPTANCE
from metric_oracles import brute_metrics, pairwise_auc, sweep_ap
from msse.backbone import MiniDenseNet, MiniDenseNetConfig
from msse.data.dedup import dedup_filter
from msse.data.manifest import Manifest, Record
from msse.data.phash import phash64, similarity
from msse.data.synthetic import make_gratings
from msse.explain import grad_cam, normalize
from msse.head import GapFcHead, MsseHead, MsseHeadConfig
from msse.layers import global_avg_pool_forward
from msse.metrics import ConfusionMatrix, binary_pr, binary_roc, class_metrics, cohen_kappa
from msse.model import Classifier
from msse.trainer import (
    Adam, SampleSet, TrainConfig, fit, load_checkpoint, save_checkpoint, stratified_split,
)
from msse.trainer.split import split_counts


def verdict(n, name, ok, detail):
    ACCEPTANCE[n] = (bool(ok), name, detail)
    print(f"[{'PASS' if ok else 'FAIL'}] {n}. {name}: {detail}")
    assert ok, detail


def test_01_gradient_suite():
    t0 = time.perf_counter()
    worst = {name: max(case(seed) for seed in range(20))
             for name, case in gradcases.ACCEPTANCE_CASES.items()}
    elapsed = time.perf_counter() - t0
    name, err = max(worst.items(), key=lambda kv: kv[1])
    verdict(1, "gradient suite", err < 1e-4 and elapsed < 60,
            f"{len(worst)} layers x 20 seeds, worst {name} {err:.2e}, {elapsed:.1f}s")


def test_02_shape_contract():
    head = MsseHead(MsseHeadConfig(), seed=0)
    ok = True
    for n in range(1, 9):
        x = np.random.default_rng(n).normal(size=(n, 1920, 7, 7)).astype(np.float32)
        logits, tape = head.forward(x, "infer")
        pooled, _ = global_avg_pool_forward(tape["z"])
        ok &= tape["split"] == 128 and tape["z"].shape == (n, 256, 7, 7)
        ok &= pooled.shape == (n, 256) and logits.shape == (n, 9)
    verdict(2, "shape contract", ok, "(n,1920,7,7) -> 128+128 -> 256 -> 9 for n=1..8")


def test_03_metrics_oracle():
    rng = np.random.default_rng(3)
    worst, identity = 0.0, True
    for _ in range(1000):
        k = int(rng.integers(2, 10))
        m = rng.integers(0, 20, size=(k, k))
        m[rng.integers(0, k), rng.integers(0, k)] += 1
        cm = class_metrics(ConfusionMatrix(m))
        ref = brute_metrics(m.tolist())
        worst = max(worst, *(np.abs(getattr(cm, f) - ref[f]).max()
                             for f in ("precision", "recall", "f1")),
                    abs(cm.accuracy - ref["accuracy"]))
        try:
            kappa = cohen_kappa(ConfusionMatrix(m))[0]
            worst = max(worst, abs(kappa - ref["kappa"]))
        except ValueError:
            assert np.isnan(ref["kappa"])
        identity &= abs(cm.weighted["recall"] - cm.accuracy) < 1e-12
    verdict(3, "metrics oracle", worst < 1e-12 and identity,
            f"1000 matrices, max deviation {worst:.1e}, weighted recall == accuracy: {identity}")


def test_04_kappa_reference_marginals():
    marg = np.array([450, 500, 528, 406, 500, 484, 500, 450, 386], dtype=np.float64)
    n = marg.sum()
    p_e = float((marg / n) @ (marg / n))
    kappa = (0.9931 - p_e) / (1 - p_e)
    ok = abs(p_e - 0.1121) <= 1e-4 and abs(kappa - 0.9922) <= 2e-4
    verdict(4, "kappa consistency", ok, f"p_e={p_e:.6f}, kappa={kappa:.6f}")


def test_05_curve_oracles():
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 51))
        pos = rng.random(n) < 0.4
        pos[0], pos[-1] = True, False
        scores = rng.random(n).round(int(rng.integers(1, 4)))  # coarse rounding forces ties
        auc = binary_roc(scores, pos)[3]
        ap = binary_pr(scores, pos)[3]
        worst = max(worst, abs(auc - pairwise_auc(scores.tolist(), pos.tolist())),
                    abs(ap - sweep_ap(scores.tolist(), pos.tolist())))
    pos = np.array([True, True, False, False, False])
    perfect = np.array([0.9, 0.8, 0.3, 0.2, 0.1])
    exact = binary_roc(perfect, pos)[3] == 1.0 and binary_pr(perfect, pos)[3] == 1.0
    verdict(5, "curve oracles", worst < 1e-9 and exact,
            f"100 cases, max deviation {worst:.1e}, perfect AUC/AP exactly 1: {exact}")


def _toy_split(labels, seed):
    recs = [Record(f"{k}/{i:05d}", str(k)) for i, k in enumerate(labels)]
    m = stratified_split(Manifest(recs), seed=seed)
    return ({s: np.array([i for i, r in enumerate(m) if r.split == s])
             for s in ("train", "val", "test")})


@pytest.mark.slow
def test_06_toy_training():
    seed = 42
    t0 = time.perf_counter()
    images, labels = make_gratings(300, 56, seed)
    idx = _toy_split(labels, seed)
    train = SampleSet(images[idx["train"]], labels[idx["train"]])
    val = SampleSet(images[idx["val"]], labels[idx["val"]])
    cfg = TrainConfig(batch_size=64, epochs=30, lr=1e-3, seed=seed)
    best = {}
    for kind in ("msse", "gapfc"):
        bb = MiniDenseNet(seed=seed)
        head = (MsseHead(MsseHeadConfig(in_channels=bb.output_channels), seed=seed)
                if kind == "msse" else GapFcHead(bb.output_channels, 9, seed=seed))
        log = fit(Classifier(bb, head), train, val, cfg)
        best[kind] = max(log.column("val_accuracy"))
    elapsed = time.perf_counter() - t0
    ok = best["msse"] >= 0.90 and best["msse"] >= best["gapfc"] and elapsed < 600
    verdict(6, "toy training", ok,
            f"val acc MS-SSE {best['msse']:.4f} vs GAP+FC {best['gapfc']:.4f}, {elapsed:.0f}s")


def _small_run(tmp_path, tag, epochs, seed=5, opt=None, model=None):
    images, labels = make_gratings(20, 16, seed=2, num_classes=3)
    train = SampleSet(images[::2], labels[::2], [(i, f"aug{i}") for i in range(0, 30, 3)])
    val = SampleSet(images[1::2], labels[1::2])
    if model is None:
        bb = MiniDenseNet(MiniDenseNetConfig(input_size=16, stem_channels=4,
                                             blocks=[(1, 4), (1, 4)]), seed=seed)
        model = Classifier(bb, MsseHead(MsseHeadConfig(in_channels=bb.output_channels,
                                                       proj_channels=8, se_ratio=4,
                                                       num_classes=3), seed=seed))
    opt = opt or Adam()
    log = fit(model, train, val, TrainConfig(batch_size=8, epochs=epochs, seed=seed), opt)
    save_checkpoint(tmp_path / f"{tag}.ckpt", model, opt, {"seed": seed})
    log.save_csv(tmp_path / f"{tag}.csv")
    return model, opt, log


def test_07_determinism(tmp_path):
    _, _, full = _small_run(tmp_path, "a", 4)
    _small_run(tmp_path, "b", 4)
    same = all((tmp_path / f"a.{ext}").read_bytes() == (tmp_path / f"b.{ext}").read_bytes()
               for ext in ("ckpt", "csv"))
    model, _, _ = _small_run(tmp_path, "half", 2)
    opt = Adam()
    load_checkpoint(tmp_path / "half.ckpt", model, opt)
    _, _, rest = _small_run(tmp_path, "resumed", 4, opt=opt, model=model)
    resumed = rest.rows == full.rows[2:]
    resumed_ckpt = (tmp_path / "resumed.ckpt").read_bytes() == (tmp_path / "a.ckpt").read_bytes()
    verdict(7, "determinism", same and resumed and resumed_ckpt,
            f"identical runs byte-equal: {same}; resume trace equal: {resumed}, "
            f"final checkpoint equal: {resumed_ckpt}")


def _greedy_oracle(hashes, tau):
    kept = []
    for i, h in enumerate(hashes):
        if all(similarity(h, hashes[j]) < tau for j in kept):
            kept.append(i)
    return kept


def test_08_dedup_properties():
    images, _ = make_gratings(50, 32, seed=8)
    hashes = [phash64(im) for im in images]
    rng = np.random.default_rng(8)
    # 450 originals plus 50 exact copies scattered through the order
    corpus = hashes + [hashes[i] for i in rng.integers(0, 450, 50)]
    corpus = [corpus[i] for i in rng.permutation(len(corpus))]
    ok, detail = True, []
    for tau in (0.3, 0.6, 0.8, 0.9, 1.0):
        kept, _ = dedup_filter(corpus, tau)
        ok &= kept == _greedy_oracle(corpus, tau)
        ok &= len({corpus[i] for i in kept}) == len(kept)  # duplicates collapsed
        ok &= all(similarity(corpus[a], corpus[b]) < tau
                  for x, a in enumerate(kept) for b in kept[x + 1:])
        detail.append(f"tau={tau}: {len(kept)} kept")
    verdict(8, "dedup properties", ok, f"{len(corpus)} images; " + ", ".join(detail))


def test_09_split():
    exact = split_counts(4500) == (3600, 450, 450)
    within = all(abs(c - r * n) <= 1 + 1e-9
                 for n in range(3, 6000) for c, r in zip(split_counts(n), (0.8, 0.1, 0.1)))
    m = stratified_split(Manifest([Record(f"b/{i}", "brick") for i in range(4500)]), seed=0)
    real = [sum(r.split == s for r in m) for s in ("train", "val", "test")] == [3600, 450, 450]
    verdict(9, "stratified split", exact and within and real,
            f"4500 -> 3600/450/450: {exact and real}; all n in [3, 6000) within 1: {within}")


class _LinearMaps:
    def feature_maps(self, x):
        return x

    def scores_from_maps(self, maps):
        return maps.mean(axis=(2, 3))[:, :1]

    def score_grad(self, maps, c):
        g = np.zeros_like(maps)
        g[:, 0] = 1.0 / (maps.shape[2] * maps.shape[3])
        return g


def test_10_grad_cam():
    rng = np.random.default_rng(10)
    in_range, linear_ok, alpha_err = True, True, 0.0
    for seed in range(10):
        A = rng.normal(size=(1, 4, 6, 6))
        hm = grad_cam(_LinearMaps(), A, 0, output_size=(24, 24))
        in_range &= 0.0 <= hm.values.min() and hm.values.max() <= 1.0
        at_source = grad_cam(_LinearMaps(), A, 0)
        linear_ok &= np.allclose(at_source.values, normalize(np.maximum(A[0, 0], 0))[0], atol=1e-12)

    cfg = MsseHeadConfig(in_channels=8, proj_channels=4, se_ratio=4, num_classes=3)
    head = MsseHead(cfg, seed=1, dtype=np.float64)
    for lp in head.params.values():
        lp["bias"].value[...] = rng.normal(scale=0.3, size=lp["bias"].value.shape)
    x = rng.normal(size=(1, 8, 4, 4))
    maps = head.feature_maps(x)
    for c in range(3):
        hm = grad_cam(head, x, c)
        in_range &= 0.0 <= hm.values.min() and hm.values.max() <= 1.0
        fd = np.zeros(maps.shape[1])
        eps = 1e-6
        for idx in np.ndindex(maps.shape):
            up, dn = maps.copy(), maps.copy()
            up[idx] += eps
            dn[idx] -= eps
            fd[idx[1]] += (head.scores_from_maps(up)[0, c] - head.scores_from_maps(dn)[0, c]) / (2 * eps)
        fd /= maps.shape[2] * maps.shape[3]
        alpha_err = max(alpha_err, (np.abs(hm.alphas - fd) / np.maximum(np.abs(fd), 1e-4)).max())
    verdict(10, "grad-cam", in_range and linear_ok and alpha_err < 1e-4,
            f"range [0,1]: {in_range}; linear oracle: {linear_ok}; alpha FD error {alpha_err:.1e}")
