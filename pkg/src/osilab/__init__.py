"""Oblivious subspace injection laboratory."""
