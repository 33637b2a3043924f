"""
HVBK Spectral - Pseudospectral simulator and verification harness for the two-fluid HVBK equations
"""

__version__ = "0.1.0"
