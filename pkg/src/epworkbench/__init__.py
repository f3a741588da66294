"""Cardiac electrophysiology workbench.

Modules:

``grid``        scalar fields on the square domain, FFT helpers, frame sequences
``diffusion``   explicit anisotropic diffusion and monodomain reaction-diffusion
``scenarios``   random initial conditions, tissue tensor fields, dataset batches
``channel``     sodium-channel gating model and voltage-clamp protocols
``abc``         ABC sequential Monte Carlo parameter inference
``egm``         electrogram preprocessing and feature extraction
``classify``    decision trees, bagging, cross-validation, forward selection
``cli``         the ``ep-workbench`` command line
"""

__version__ = "0.1.0"
