"""Mediator discovery in categorical data with graphical loglinear models."""

__version__ = "0.1.0"
