"""Finite-state-machine smart contracts: semantics, augmentation, model checking, code generation."""

__version__ = "0.1.0"
