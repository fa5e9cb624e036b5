"""Physics-aware sparse recovery through an NLSE fiber channel (PA-ISTA)."""

__version__ = "0.1.0"
