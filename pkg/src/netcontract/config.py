"""Numerical tolerances shared by every solver path."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    solve_residual: float = 1e-10
    spectral_rel: float = 1e-10
    power_iter_cap: int = 10_000
    contract_identity: float = 1e-9
    foc_residual: float = 1e-9
    symmetry: float = 1e-9
    nonneg_slack: float = 1e-12
    strict_threshold: float = 1e-9
    zero_threshold: float = 1e-12
    fd_mismatch: float = 1e-4
    kappa_forms: float = 1e-12
    kappa_fd: float = 1e-6
    fd_floor: float = 1e-8
    iteration_cap: int = 100_000


TOL = Tolerances()


def worker_count(env: str = "NETCONTRACT_THREADS") -> int:
    """Thread cap from the environment; unset, 0 or invalid means one per CPU."""
    import os

    try:
        n = int(os.environ.get(env, "0"))
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)
