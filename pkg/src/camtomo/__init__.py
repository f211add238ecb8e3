"""camtomo: Funk-Radon transforms over tangent sections of an ellipsoidal cam, and their exact inversion."""

__version__ = "0.1.0"
