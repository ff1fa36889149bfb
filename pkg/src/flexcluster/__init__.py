"""Coordinated demand flexibility for building clusters, at desk scale.

A central aggregator turns a learnable smoothing filter and an apportionment
vector into hourly load-shift commands; each building tracks its share with a
small QP over virtual-battery models of its thermal storage while identifying
the model parameters online; everything runs against a self-contained
synthetic cluster simulator with rule-based and no-storage baselines.
"""

__version__ = "0.1.0"
