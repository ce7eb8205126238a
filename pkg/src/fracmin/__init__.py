"""Exact discrete minimization of the fractional perimeter in a cylinder."""
