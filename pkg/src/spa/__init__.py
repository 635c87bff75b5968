"""Feature self-correlation toolkit: exact chain-order correlation kernels,
activation-map refinement, pseudo-mask losses, and localization metrics."""

__version__ = "0.1.0"
