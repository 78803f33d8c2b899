"""Test package for sov_verify."""
