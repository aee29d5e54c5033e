"""mtlab: a desk-scale transfer-learning laboratory for low-resource MT."""

__version__ = "0.1.0"
