"""Classifier training, artificial-uncertainty attacks, and calibration auditing."""

__version__ = "0.1.0"
