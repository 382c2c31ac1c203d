"""Repetitive spatio-temporal key exchange engine and discrete-event simulator."""

__version__ = "1.0.0"
