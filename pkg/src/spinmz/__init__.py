"""Simulation of a multi-ion Mach-Zehnder interferometer built from adiabatic
passages of the giant-spin Hamiltonian ``delta Jz - Bx Jx - lambda Jz^2``."""

__version__ = "0.1.0"
