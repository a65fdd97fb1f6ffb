"""Quick order-fair atomic broadcast: protocol, network simulator and trace checker."""

__version__ = "0.1.0"
