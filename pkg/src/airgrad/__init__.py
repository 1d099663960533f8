"""Federated learning over a massive-MIMO uplink, at desk scale.

Devices compute local gradients on single-digit MNIST shards, permute and
power-normalize them into sparse transmit signals, and send them over a
frequency-selective OFDM uplink. The server recovers the per-resource
transmitted vectors with an iterative LMMSE compressive-sensing algorithm
(or with MRC / one-shot LMMSE baselines) and aggregates the reconstructed
gradients into an ADAM update.
"""

__version__ = "0.1.0"
