"""
Test suite for Cascade Veracity
"""
