"""Predict, measure and calibrate width-limited loss floors from superposition capacity."""

__version__ = "0.1.0"
