"""Cropland mapping from multi-band satellite time series.

Raw dated band stacks go through cloud masking, 53-week compositing,
imputation, and normalization; each valid pixel becomes a 667-dimensional
feature vector; random-forest and SVM classifiers are selected by spatial
k-fold cross-validation and drive binary cropland-mask generation, with
variogram and NDVI-profile diagnostics on the side.
"""

__version__ = "0.1.0"
