"""Wavelet scattering and Mel features with a three-branch ResNet ensemble."""

from .errors import *  # noqa: F401,F403
from .kernels import BACKEND as KERNEL_BACKEND  # noqa: F401

__version__ = "0.1.0"
