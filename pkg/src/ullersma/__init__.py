"""Normal-mode laboratory for an oscillator model of QED in an absorptive,
inhomogeneous dielectric."""

__version__ = "0.1.0"
