"""Test suite for Stubborn Kinetics."""
