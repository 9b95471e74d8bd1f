"""Tests package for test_services."""
