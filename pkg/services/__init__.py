"""
Numerical services of the qflow laboratory
"""
