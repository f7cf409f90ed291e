"""Kernel-trace sequence modeling toolkit.

Argument-aware event representations (learned embeddings + sinusoidal
encodings) feeding toy-scale LSTM and Transformer language models over
system-call traces, with a synthetic workload generator and an ablation
experiment harness.
"""

__version__ = "0.1.0"
