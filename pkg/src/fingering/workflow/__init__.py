"""
Helpers for driving reproducible study bundles with doit
"""
