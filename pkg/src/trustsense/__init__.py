"""Trust/distrust classification from EEG and GSR features."""

__version__ = "0.1.0"
