"""Structure-aware graph attention networks.

Pretrains frozen structural node embeddings (anonymous-walk skip-gram or
learnable stochastic graph-kernel filters) and trains an attention
network whose coefficients come from those embeddings while messages
carry the original node features.
"""

from ._backend import BACKEND_NAME, HAVE_SPEEDUPS

__version__ = "0.1.0"

__all__ = ["BACKEND_NAME", "HAVE_SPEEDUPS", "__version__"]
