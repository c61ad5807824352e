"""Covering conditions, bounded orbits and hyperbolicity diagnostics for
locally constant linear cocycles over subshifts of finite type."""

__version__ = "0.1.0"
