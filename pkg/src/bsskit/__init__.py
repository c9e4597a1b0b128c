"""bsskit: blind source separation with flexible densities.

Subpackages
-----------
sources   synthetic GGD / MGGD / fMRI-like data
maxent    maximum-entropy density estimation with kernels
mggd      MGGD density, scatter/shape estimators, SPD geometry
ica       decoupled ICA engine (flexible density and sparse variants)
iva       IVA with an adaptive MGGD source model
metrics   ISI, ISR, Gini, assignment
bench     experiment harness
"""

__version__ = "0.1.0"
