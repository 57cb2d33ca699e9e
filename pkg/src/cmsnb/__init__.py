"""Coupled Markov-switching negative binomial models for outbreak detection."""
