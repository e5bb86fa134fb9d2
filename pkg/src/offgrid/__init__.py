"""Off-the-grid recovery of piecewise constant images from low-pass Fourier samples."""

__version__ = "0.1.0"
