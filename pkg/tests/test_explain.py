import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msse.explain import COLOR_TABLE, Heatmap, grad_cam, normalize, render_heatmap_overlay
from msse.head import MsseHead, MsseHeadConfig


class MapsModel:
    """Feature maps are the input itself; class scores are GAP(A) @ W."""

    def __init__(self, W):
        self.W = np.asarray(W, dtype=np.float64)

    def feature_maps(self, x):
        return x

    def scores_from_maps(self, maps):
        return maps.mean(axis=(2, 3)) @ self.W

    def score_grad(self, maps, c):
        h, w = maps.shape[2:]
        return np.broadcast_to(self.W[:, c][None, :, None, None] / (h * w), maps.shape)


def reduced_head(seed=0):
    cfg = MsseHeadConfig(in_channels=8, proj_channels=4, se_ratio=4, num_classes=3)
    head = MsseHead(cfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed)
    for lp in head.params.values():
        lp["bias"].value[...] = rng.normal(scale=0.3, size=lp["bias"].value.shape)
    return head


class TestGradCam:
    def test_single_channel_linear_model(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(1, 3, 5, 6))
        model = MapsModel([[2.0, 0.0], [0.0, 1.0], [0.0, 1.0]])  # class 0 = 2 * mean(A_0)
        hm = grad_cam(model, A, 0)
        expected, flat = normalize(np.maximum(A[0, 0], 0))
        assert not flat and not hm.all_zero
        assert np.allclose(hm.values, expected, atol=1e-12)
        assert np.unravel_index(hm.values.argmax(), hm.values.shape) == \
            np.unravel_index(np.maximum(A[0, 0], 0).argmax(), (5, 6))
        assert hm.values.min() == 0.0 and hm.values.max() == 1.0

    def test_disconnected_class_is_flagged(self):
        A = np.random.default_rng(1).normal(size=(1, 2, 4, 4))
        hm = grad_cam(MapsModel([[1.0, 0.0], [1.0, 0.0]]), A, 1)
        assert hm.all_zero and np.all(hm.values == 0)

    def test_upsampled_output_size(self):
        A = np.random.default_rng(2).normal(size=(1, 2, 7, 7))
        hm = grad_cam(MapsModel([[1.0], [-1.0]]), A, 0, output_size=(56, 40))
        assert hm.values.shape == (56, 40) and hm.source_hw == (7, 7)
        assert 0.0 <= hm.values.min() and hm.values.max() <= 1.0

    def test_alphas_match_finite_differences(self):
        head = reduced_head()
        x = np.random.default_rng(3).normal(size=(1, 8, 3, 3))
        maps = head.feature_maps(x)
        for c in range(3):
            hm = grad_cam(head, x, c)
            eps = 1e-6
            fd = np.zeros(maps.shape[1])
            for k in range(maps.shape[1]):
                for i in range(3):
                    for j in range(3):
                        up, dn = maps.copy(), maps.copy()
                        up[0, k, i, j] += eps
                        dn[0, k, i, j] -= eps
                        fd[k] += (head.scores_from_maps(up)[0, c]
                                  - head.scores_from_maps(dn)[0, c]) / (2 * eps)
            fd /= 9
            err = np.abs(hm.alphas - fd) / np.maximum(np.abs(fd), 1e-4)
            assert err.max() < 1e-4

    def test_target_maps_are_head_z(self):
        head = reduced_head(1)
        x = np.random.default_rng(4).normal(size=(1, 8, 3, 3))
        logits, tape = head.forward(x, "infer")
        assert np.allclose(head.scores_from_maps(tape["z"]), logits, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.01, 100.0))
    def test_positive_scale_invariance(self, seed, s):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(1, 3, 4, 4))
        model = MapsModel(rng.normal(size=(3, 2)))
        a, b = grad_cam(model, A, 1), grad_cam(model, s * A, 1)
        assert a.all_zero == b.all_zero
        assert np.allclose(a.values, b.values, atol=1e-9)
        assert 0.0 <= b.values.min() and b.values.max() <= 1.0

    def test_bad_inputs(self):
        model = MapsModel([[1.0]])
        with pytest.raises(ValueError):
            grad_cam(model, np.zeros((1, 1, 2, 2)), 3)
        with pytest.raises(ValueError):
            grad_cam(model, np.zeros((2, 1, 2, 2)), 0)

    def test_csv(self, tmp_path):
        hm = Heatmap(np.array([[0.0, 0.5], [1.0, 0.25]]), 0, (2, 2))
        hm.save_csv(tmp_path / "h.csv")
        assert (tmp_path / "h.csv").read_text().splitlines() == ["0.0,0.5", "1.0,0.25"]


class TestOverlay:
    def test_table(self):
        assert COLOR_TABLE.shape == (256, 3) and COLOR_TABLE.dtype == np.uint8
        assert COLOR_TABLE[0, 2] > COLOR_TABLE[0, 0]      # cold end is blue
        assert COLOR_TABLE[255, 0] > COLOR_TABLE[255, 2]  # hot end is red

    def test_alpha_zero_is_original(self):
        img = np.random.default_rng(0).integers(0, 256, (6, 5, 3), dtype=np.uint8)
        hm = np.random.default_rng(1).random((6, 5))
        assert np.array_equal(render_heatmap_overlay(img, hm, 0.0), img)

    def test_alpha_one_saturated(self):
        img = np.random.default_rng(0).integers(0, 256, (4, 4, 3), dtype=np.uint8)
        out = render_heatmap_overlay(img, np.ones((4, 4)), 1.0)
        assert np.all(out == COLOR_TABLE[255])

    def test_half_blend_is_mean(self):
        img = np.full((1, 1, 3), [10, 101, 250], dtype=np.uint8)
        out = render_heatmap_overlay(img, np.zeros((1, 1)), 0.5)
        color = COLOR_TABLE[0].astype(np.float64)
        expected = np.clip(np.rint((color + [10, 101, 250]) / 2), 0, 255)
        assert out[0, 0].tolist() == expected.tolist()

    def test_errors(self):
        img = np.zeros((2, 2, 3), dtype=np.uint8)
        with pytest.raises(ValueError):
            render_heatmap_overlay(img, np.zeros((2, 2)), 1.5)
        with pytest.raises(ValueError):
            render_heatmap_overlay(img, np.zeros((3, 2)), 0.5)
