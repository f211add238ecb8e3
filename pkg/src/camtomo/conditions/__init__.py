"""Admissibility condition validators for camtomo."""
