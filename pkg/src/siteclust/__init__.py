"""Site clustering for occupancy models built from opportunistic checklists."""

__version__ = "0.1.0"
