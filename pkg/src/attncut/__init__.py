"""Attention-tensor to object-mask toolkit."""

__version__ = "0.1.0"
