"""Forward transform, cam grids and sinograms for camtomo."""
