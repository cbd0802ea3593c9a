"""Online resource allocation with interaction-coupled (endogenous) costs."""

__version__ = "1.0.0"
