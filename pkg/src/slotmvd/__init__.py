"""Object-slot-conditioned multiview diffusion on a procedural toy dataset.

Pure numpy/numba stack: a small reverse-mode autodiff engine, a ray-cast
scene renderer, a slot-attention scene encoder, a multiview denoising U-Net,
staged camera-path sampling, and slot-removal editing with segmentation
metrics. Entry point: the ``slotmvd`` CLI.
"""

__version__ = "0.1.0"

from slotmvd.errors import ContractViolation, NumericFailure

__all__ = ["ContractViolation", "NumericFailure", "__version__"]
