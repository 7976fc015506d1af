"""
Configuration package for branchnet.
"""
