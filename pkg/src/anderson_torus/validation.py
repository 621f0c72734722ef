"""Argument checks shared by the library, the estimators and the CLI."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_scalar


def check_grid_size(N) -> int:
    N = check_scalar(N, "N", target_type=numbers.Integral, min_val=4)
    if N % 2:
        raise ValueError(f"N must be even, got {N}")
    return int(N)


def check_eps(eps) -> float:
    return float(check_scalar(eps, "eps", target_type=numbers.Real, min_val=0.0, max_val=1.0,
                              include_boundaries="right"))


def check_truncation(s) -> float:
    return float(check_scalar(s, "s", target_type=numbers.Real, min_val=0.0, max_val=1.0,
                              include_boundaries="right"))


def check_exponent(name: str, value, lower: float = 1.0) -> float:
    value = float(check_scalar(value, name, target_type=numbers.Real, min_val=lower))
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite")
    return value


def is_strichartz_pair(p: float, q: float, tol: float = 1e-12) -> bool:
    return abs(2.0 / p + 2.0 / q - 1.0) <= tol


def check_strichartz_pair(p, q) -> tuple[float, float]:
    p, q = check_exponent("p", p, 2.0), check_exponent("q", q, 2.0)
    if not is_strichartz_pair(p, q):
        raise ValueError(f"(p, q) = ({p}, {q}) violates 2/p + 2/q = 1")
    return p, q


def check_scales(scales) -> list[int]:
    scales = [int(j) for j in scales]
    if len(set(scales)) < 3:
        raise ValueError("at least 3 distinct frequency scales are required")
    if min(scales) < -1:
        raise ValueError("frequency blocks start at -1")
    return sorted(set(scales))


def check_time_step(T, dt) -> tuple[float, float]:
    T = float(check_scalar(T, "T", target_type=numbers.Real, min_val=0.0))
    dt = float(check_scalar(dt, "dt", target_type=numbers.Real, min_val=0.0,
                            include_boundaries="neither"))
    return T, dt
