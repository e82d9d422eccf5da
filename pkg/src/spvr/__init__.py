"""Syntax-guided prompt generation and evaluation for C/C++ vulnerability repair."""

__version__ = "0.1.0"
