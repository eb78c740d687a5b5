"""Feature-based tests, one file per feature and scenario.
"""
