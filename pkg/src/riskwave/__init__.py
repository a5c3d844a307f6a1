"""Survival risk stratification from expression profiles.

Kaplan-Meier labelling, Mexican-hat wavelet expansion, SVD compression
and a one-hidden-layer network, with leave-one-out and undersampled
evaluation and a grid search over the pipeline parameters.
"""

__version__ = "0.1.0"
