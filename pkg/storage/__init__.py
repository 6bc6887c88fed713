"""
Run directories and snapshot files
"""
