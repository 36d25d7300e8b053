"""Joint learned-receiver and RIS phase optimization via Bayesian optimization."""

__version__ = "0.1.0"
