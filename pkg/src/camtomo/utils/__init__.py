"""Utility modules for camtomo."""
