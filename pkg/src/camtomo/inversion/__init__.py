"""Singular integrals and reconstruction formulas for camtomo."""
