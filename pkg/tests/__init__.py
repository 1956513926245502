"""Unit test package for piezoplate."""
