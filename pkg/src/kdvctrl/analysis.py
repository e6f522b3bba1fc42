"""Discrete norms, Lyapunov certificate constants, and decay-rate fits."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, UsageError


def l2_norm(state, dx):
    """Trapezoidal discrete L2 norm of a sampled profile."""
    if dx <= 0:
        raise ConfigurationError(f"dx must be positive, got {dx}")
    state = np.asarray(state, dtype=float)
    return math.sqrt(np.trapezoid(state * state, dx=dx))


@dataclass(frozen=True)
class LyapunovConstants:
    """Weights of V = A int w_hat^2 + B int w_err^2 and the certified rate.

    D bounds the coupling of the observation error into the controlled
    target state; the rate is mu = lam - D^2/(2A), positive once
    A >= D^2/(2 lam) holds with margin.
    """

    D: float
    A: float
    B: float
    mu: float
    lam: float
    eps_A: float


def lyapunov_constants(k_table, p1, lam, policy="tight", eps_A=0.1):
    """Compute D = max_x {p1(x) - int_x^L k(x,y) p1(y) dy} and the weights.

    ``p1`` must be sampled on the kernel-table grid so the inner integrals
    can use the table rows directly.
    """
    if lam <= 0:
        raise ConfigurationError(f"decay parameter must be positive, got {lam}")
    if policy != "tight":
        raise UsageError(f"unknown weight policy {policy!r}")
    if k_table.kind != "controller_k":
        raise UsageError(f"need a controller_k table, got {k_table.kind}")
    M, h = k_table.grid.M, k_table.grid.h
    p1 = np.asarray(p1, dtype=float)
    if p1.shape != (M + 1,):
        raise UsageError(f"p1 must have {M + 1} samples on the kernel grid")

    coupling = np.empty(M + 1)
    for i in range(M + 1):
        inner = np.trapezoid(k_table.values[i, i:] * p1[i:], dx=h)
        coupling[i] = p1[i] - inner
    D = float(np.max(coupling))

    if D == 0.0:
        return LyapunovConstants(D=0.0, A=0.0, B=0.0, mu=lam, lam=lam, eps_A=eps_A)
    A = D * D / (2.0 * lam) * (1.0 + eps_A)
    B = A * A * k_table.grid.L
    mu = lam - D * D / (2.0 * A)
    return LyapunovConstants(D=D, A=A, B=B, mu=mu, lam=lam, eps_A=eps_A)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares exponential fit norm(t) ~ C * exp(-rate * t)."""

    C: float
    rate: float
    rsq: float
    window: tuple


def decay_fit(times, norms, window=None):
    """Fit an exponential decay rate on log-norms inside the window."""
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if times.shape != norms.shape:
        raise UsageError("times and norms lengths differ")
    if window is None:
        window = (times[0] + 0.5 * (times[-1] - times[0]), times[-1])
    t0, t1 = window
    sel = (times >= t0) & (times <= t1)
    if np.count_nonzero(sel) < 3:
        raise DomainError("need at least 3 samples in the fit window")
    if np.any(norms[sel] <= 0):
        raise DomainError("nonpositive norm samples in the fit window; trim it")
    t = times[sel]
    logn = np.log(norms[sel])
    slope, intercept = np.polyfit(t, logn, 1)
    fitted = slope * t + intercept
    ss_res = float(np.sum((logn - fitted) ** 2))
    ss_tot = float(np.sum((logn - logn.mean()) ** 2))
    rsq = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return DecayFit(C=math.exp(intercept), rate=-slope, rsq=rsq,
                    window=(float(t0), float(t1)))


@dataclass(frozen=True)
class DissipationReport:
    """Per-step norm-growth check of an uncontrolled linear run."""

    max_growth: float        # max over steps of ||u^{i+1}||/||u^i|| - 1
    first_violation: int | None
    tol: float
    passed: bool


def dissipation_check(trajectory, tol=1e-10):
    """Verify the discrete L2 norm never grows along the trajectory.

    Only meaningful for the uncontrolled linear scheme in consistent mode,
    where the continuous energy identity is dissipative.
    """
    cfg = trajectory.config
    if cfg.mode != "uncontrolled" or cfg.nonlinear:
        raise UsageError("dissipation check needs an uncontrolled linear run")
    if cfg.scheme_mode != "consistent_euler":
        raise UsageError("dissipation check needs the consistent_euler scheme")
    norms = trajectory.norm_u
    max_growth = 0.0
    first = None
    for i in range(len(norms) - 1):
        if norms[i] == 0.0:
            growth = 0.0 if norms[i + 1] == 0.0 else math.inf
        else:
            growth = norms[i + 1] / norms[i] - 1.0
        if growth > max_growth:
            max_growth = growth
        if first is None and growth > tol:
            first = i + 1
    return DissipationReport(max_growth=max_growth, first_violation=first,
                             tol=tol, passed=first is None)
