"""Denoising of skin sympathetic nerve activity (SKNA) contaminated by EMG.

Submodules: ``dsp`` (conditioning), ``synth`` (synthetic data), ``mixing``
(contamination protocol), ``nn`` (layer engine), ``denoiser`` (model and
training), ``features``, ``stats``, ``classify``, ``experiment`` (LOSO
driver) and ``cli``.
"""
from ._accel import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
