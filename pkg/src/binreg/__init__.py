"""Binarized linear regression models trained by exact integer programming.

The package trains multiclass linear classifiers whose weights are
restricted to {-1, 0, +1} and whose biases are integers, by solving a
mixed-integer program (or its all-binary pseudo-Boolean quantization)
with a built-in branch-and-bound solver.
"""

__version__ = "0.1.0"
