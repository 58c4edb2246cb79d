"""Desk-scale 3D CT report-generation pipeline: preprocessing, token
geometry, micro 3D-ViT pretraining losses, curation, and NLP metrics."""

from argus_bench._core import *  # noqa: F401,F403
from argus_bench._core import __doc__ as _core_doc

__all__ = [name for name in dir() if not name.startswith("_")]
