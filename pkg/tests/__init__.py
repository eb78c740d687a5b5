"""Centralized test package.
"""
