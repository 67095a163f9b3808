"""Annealed Lyapunov exponents for random walks among heavy-tailed potentials.

Modules
-------
theory
    Rate integrals, splittings, Chernoff and counting bounds, scales.
lattice_walk
    Simple random walk primitives, escape probability, hitting probabilities.
environment
    Potential laws and reproducible i.i.d. fields.
fk_mc
    Monte Carlo estimation of the annealed crossing weight and rate fits.
green
    Sparse Anderson Hamiltonian and averaged Green function decay.
oracle
    Brute-force references at tiny scale.
cli
    Experiment runner.
"""
from __future__ import annotations

__version__ = "0.1.0"
