"""From-scratch LSTM models for classifying the answer type of a question."""

__version__ = "0.1.0"
