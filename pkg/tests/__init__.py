"""
Test suite for HVBK Spectral
"""
