"""Tests package for test_integration."""
