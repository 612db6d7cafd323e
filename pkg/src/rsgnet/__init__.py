"""Randomized-stopping stochastic gradients for sigmoid networks."""
