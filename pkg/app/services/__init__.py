"""
Spectral kernels, dynamics, integration and verification services
"""
