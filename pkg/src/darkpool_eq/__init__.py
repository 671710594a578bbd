"""Equilibria of a lit exchange with an adjacent dark pool."""
