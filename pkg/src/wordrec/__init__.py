"""Noisy-channel recognition of child vocalizations over phoneme strings."""

from wordrec._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
