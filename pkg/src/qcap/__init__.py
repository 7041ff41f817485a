"""One-shot and asymptotic capacity bounds for quantum channels via randomized partial decoupling."""

__version__ = "0.1.0"
