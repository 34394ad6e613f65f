"""Higher-order Eulerian unfitted finite elements for convection-diffusion on moving domains."""

__version__ = "0.1.0"
