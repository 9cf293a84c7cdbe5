"""Large-deviation variational tools for time-evolved Kac spin systems."""

__version__ = "0.1.0"
