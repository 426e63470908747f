"""Dispersive homodyne readout of inhomogeneously broadened spin ensembles."""

__version__ = "0.1.0"
