"""Desk-scale sparse-view CT reconstruction toolkit.

Simulates parallel-beam CT acquisition (Radon transform, view subsampling,
transmission Poisson noise, filtered back projection), builds synthetic
phantom datasets, and trains a Fourier-convolution encoder/decoder with
teacher-student distillation (directional feature alignment plus band-pass
contrastive distillation against a FIFO memory bank).
"""

__version__ = "0.1.0"
