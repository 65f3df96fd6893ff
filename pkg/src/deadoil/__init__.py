"""Simulation, optimal control and estimate audits for a coupled
saturation/pressure system on a rectangle."""

__version__ = "0.1.0"
