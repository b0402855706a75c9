"""Test package for sspkit."""
