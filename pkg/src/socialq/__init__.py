"""Social metrics of IoT devices modeled as queues: effective bandwidth/capacity
analytics, capped-queue simulation and a credit-aware D2D relay scenario."""

__version__ = "0.1.0"
