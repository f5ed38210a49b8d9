"""Variable-density micropolar flow: state solver and boundary-control optimizer."""

__version__ = "0.1.0"
