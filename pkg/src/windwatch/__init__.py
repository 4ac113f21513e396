"""Wind turbine power forecasting and deterioration detection toolkit."""

__version__ = "0.1.0"
