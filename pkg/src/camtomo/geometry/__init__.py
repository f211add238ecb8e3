"""Cam, hypersurface and generating-function geometry for camtomo."""
