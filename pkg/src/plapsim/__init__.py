"""Finite-difference simulation of stochastic p-Laplace evolutions driven by
Holder-continuous multiplicative noise, with the Lipschitz-regularized and
higher-order-perturbed approximating equations and a Monte Carlo harness that
checks the quantitative bounds the approximation is supposed to satisfy."""

__version__ = "0.1.0"
