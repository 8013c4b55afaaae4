"""Cut-off regularization of operator dynamics on truncated Fock spaces."""

__version__ = "0.1.0"
