"""Linear stability analysis of free-surface shear flows."""
__version__ = "0.1.0"
