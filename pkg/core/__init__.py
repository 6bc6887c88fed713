"""
Core numerics and application orchestration
"""
