"""
Test suite for lesionnet.
"""
