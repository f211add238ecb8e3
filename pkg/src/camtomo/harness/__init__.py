"""Phantoms, experiment driver, plot series and self-checks."""
