"""Training-free latent guidance for slanted visual text, plus the
benchmark used to measure it."""

__version__ = "0.1.0"
