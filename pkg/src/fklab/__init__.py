"""fklab: sampling and analysis laboratory for subcritical random-cluster models."""

__version__ = "0.1.0"
