"""Event-based steering of a linear inverted pendulum template plus
QP-based whole-body tracking for a desk-scale quadruped."""

__version__ = "0.1.0"
