"""
Test suite for reuse-learn.

This package contains unit tests, integration tests, and property-based tests
for every service and the shared components.
"""
