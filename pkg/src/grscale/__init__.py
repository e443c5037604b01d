"""Generative recommendation with Semantic IDs: tokenization, seq2seq training, constrained decoding and scaling-law fitting."""

__version__ = "0.1.0"
