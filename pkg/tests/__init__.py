"""Test package for vpgmm."""
