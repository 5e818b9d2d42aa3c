"""Multi-scale squeeze-and-excitation classifier built on plain numpy.

The package is split along the pipeline: ``tensor`` and ``layers`` hold the
numeric primitives, ``backbone`` and ``head`` the network, ``trainer`` the
optimisation loop, ``metrics`` the evaluation, ``data`` the curation
pipeline and ``explain`` the Grad-CAM tooling.
"""

__version__ = "0.1.0"
