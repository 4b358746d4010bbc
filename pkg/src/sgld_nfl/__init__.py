"""Subsampling MCMC lower bounds: SGLD with perturbed minibatch measures."""

__version__ = "0.1.0"
