"""Quasi-static simulation, control, and design evaluation for
rotor-distributed aerial manipulators that perch on ceilings."""

__version__ = "0.1.0"
