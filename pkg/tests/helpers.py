"""Independent oracles shared by the test modules."""

import numpy as np

# gradients smaller than this are compared absolutely rather than relatively
REL_FLOOR = 1e-4


def numeric_grad(f, arr, h_scale=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every element of ``arr`` (in place)."""
    g = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        h = h_scale * (1.0 + abs(orig))
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise AssertionError(f"shape mismatch {a.shape} vs {n.shape}")
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_FLOOR)
    return float((np.abs(a - n) / denom).max()) if a.size else 0.0


def naive_conv2d(x, weight, bias, stride, groups):
    """Direct six-loop grouped cross-correlation with 'same' zero padding."""
    n, c, h, w = x.shape
    o, cg, kh, kw = weight.shape
    oh, ow = -(-h // stride), -(-w // stride)
    th = max((oh - 1) * stride + kh - h, 0)
    tw = max((ow - 1) * stride + kw - w, 0)
    pt, pl = th // 2, tw // 2
    og = o // groups
    y = np.zeros((n, o, oh, ow), dtype=np.float64)
    for b in range(n):
        for oc in range(o):
            g = oc // og
            for r in range(oh):
                for q in range(ow):
                    acc = 0.0 if bias is None else float(bias[oc])
                    for ic in range(cg):
                        for i in range(kh):
                            for j in range(kw):
                                yy = r * stride + i - pt
                                xx = q * stride + j - pl
                                if 0 <= yy < h and 0 <= xx < w:
                                    acc += weight[oc, ic, i, j] * x[b, g * cg + ic, yy, xx]
                    y[b, oc, r, q] = acc
    return y
