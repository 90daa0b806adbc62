"""Discrete harmonic analysis on weighted graphs.

Markov kernels, graph differential calculus, Littlewood-Paley and tent-space
functionals, molecular Hardy-space decompositions and the Riesz transform,
with a numerical verification harness in :mod:`rieszlab.experiments`.
"""

from .builders import BuilderSpec, build, lazify
from .calculus import OneForm, codifferential, differential, riesz_transform
from .graph import QuasiMetric, WeightedGraph, ball, volume

__version__ = "0.1.0"

__all__ = [
    "BuilderSpec",
    "OneForm",
    "QuasiMetric",
    "WeightedGraph",
    "ball",
    "build",
    "codifferential",
    "differential",
    "lazify",
    "riesz_transform",
    "volume",
]
