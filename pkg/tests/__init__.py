"""Tests for planesweep-glr."""
