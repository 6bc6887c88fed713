"""
Pydantic models for configs, traces and reports
"""
