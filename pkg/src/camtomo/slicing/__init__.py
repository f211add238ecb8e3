"""Level-set slicing and Gelfand-Leray quadrature for camtomo."""
