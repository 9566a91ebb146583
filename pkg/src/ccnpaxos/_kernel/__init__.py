"""Bounded-model search kernels: a pure-Python reference and an optional
compiled twin with identical packing, canonicalization, and results."""
