"""
Pydantic models for parameters, diagnostics records and reports
"""
