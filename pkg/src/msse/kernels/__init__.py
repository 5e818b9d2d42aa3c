"""Hot-loop kernels with a compiled core and a numpy fallback.

The compiled extension ``_ckernels`` is used when it imports; otherwise the
numpy module ``_pykernels`` takes over. :func:`use_backend` switches at run
time, mostly for tests and benchmarks.
"""

from __future__ import annotations

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_NAMES = (
    "im2col",
    "col2im",
    "depthwise_forward",
    "depthwise_backward",
    "maxpool_forward",
    "maxpool_backward",
)

BACKEND = ""


def available_backends() -> list[str]:
    return ["compiled", "python"] if _ckernels is not None else ["python"]


def use_backend(name: str) -> None:
    """Route kernel calls to ``"compiled"`` or ``"python"``."""
    global BACKEND
    if name == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        mod = _ckernels
    elif name == "python":
        mod = _pykernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    g = globals()
    for fn in _NAMES:
        g[fn] = getattr(mod, fn)
    BACKEND = name


use_backend("compiled" if _ckernels is not None else "python")
