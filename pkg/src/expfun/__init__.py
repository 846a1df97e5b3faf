"""Distribution of exponential functionals of hyper-exponential Levy processes."""

__version__ = "0.1.0"
