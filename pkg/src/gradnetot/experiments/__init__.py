"""Experiment drivers and image I/O used by the command-line interface."""
