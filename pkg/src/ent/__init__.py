"""Joint speech recognition and fine-grained emotion tagging with neural
transducers, operating on precomputed acoustic features at desk scale."""

__version__ = "0.1.0"
