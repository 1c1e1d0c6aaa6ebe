"""Resilient cloud control: offloaded variable-rate MPC with latency
mitigation, miss-ratio driven rate adaptation and local recovery."""

__version__ = "0.1.0"
