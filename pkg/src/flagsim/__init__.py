"""flagsim: implicit elastic-rod simulation of flagellated swimmers in Stokes flow."""

__version__ = "0.1.0"
