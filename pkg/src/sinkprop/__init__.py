"""Learning to rank by backpropagating through incomplete Sinkhorn normalization."""

__version__ = "0.1.0"
