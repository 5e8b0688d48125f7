"""Numerical tolerances shared by the whole package.

``PH_NET_TOL`` in the environment overrides the default tolerance used by
exact-arithmetic checks (symmetry, contraction, the boundary-matrix identity).
"""
import os

EXACT_TOL = 1e-10
SAMPLED_TOL = 1e-8


def exact_tol():
    value = os.environ.get("PH_NET_TOL")
    if value is None:
        return EXACT_TOL
    try:
        tol = float(value)
    except ValueError as exc:
        raise ValueError(f"PH_NET_TOL must be a float, got {value!r}") from exc
    if not tol > 0:
        raise ValueError(f"PH_NET_TOL must be positive, got {tol}")
    return tol
