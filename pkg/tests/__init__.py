"""Unit test package for pushtorch."""
