"""Harness for evaluating individualized reasoning in six-player Avalon."""

__version__ = "0.1.0"
