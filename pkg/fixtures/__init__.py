"""Reusable pytest fixtures.

Keep shared samples and fitted models here so tests stay small and consistent.
"""
