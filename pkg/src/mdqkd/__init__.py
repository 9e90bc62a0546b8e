"""Malicious-device-tolerant MDI-QKD post-processing."""
