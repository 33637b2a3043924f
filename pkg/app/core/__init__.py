"""
Settings, error taxonomy and persistence
"""
