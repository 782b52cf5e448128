"""Fictitious play for potential mean-field games on the torus."""
