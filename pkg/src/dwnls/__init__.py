"""Double-well quintic NLS toolkit: bound states, ground-state branches,
linear stability and reduced/full dynamics."""

__version__ = "0.1.0"
