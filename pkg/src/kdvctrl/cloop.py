"""Coupled plant-observer closed-loop simulation.

Per time step the loop (a) evaluates the boundary feedback from the
observer state (plant state in state_feedback mode, zero when
uncontrolled), (b) reads both outputs at x = L, (c) advances observer and
plant with the implicit fixed-point step, the observer receiving the
output-error injection, (d) overwrites the left boundary entry of both
new states with the feedback value and applies the right-boundary rule.
"""

from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .errors import BlowUpError, ConfigurationError, UsageError
from .fdm import apply_right_boundary, build_operators, fixed_point_step
from .grids import SpaceTimeGrid

SIM_MODES = ("uncontrolled", "state_feedback", "output_feedback")


@dataclass(frozen=True)
class SimConfig:
    """Scenario description; defaults reproduce the reference experiment."""

    L: float = 2.0 * np.pi
    Nx: int = 30
    Nt: int = 167
    Tfinal: float = 10.0
    lam: float = 2.0
    mode: str = "output_feedback"
    nonlinear: bool = True
    Niter: int = 5
    scheme_mode: str = "consistent_euler"
    u0: object = "sin"
    uhat0: object = "zero"
    kernel_M: int = 30

    def grid(self):
        return SpaceTimeGrid(L=self.L, Nx=self.Nx, Tfinal=self.Tfinal, Nt=self.Nt)


@dataclass(frozen=True)
class Trajectory:
    """Recorded time series of a closed-loop run."""

    config: SimConfig
    times: np.ndarray
    plant: np.ndarray               # (Nt+1, Nx+1)
    observer: np.ndarray | None     # None in uncontrolled mode
    control: np.ndarray
    output_u: np.ndarray
    output_o: np.ndarray
    norm_u: np.ndarray = field(default=None)
    norm_uhat: np.ndarray = field(default=None)
    norm_err: np.ndarray = field(default=None)


def initial_profile(spec, grid):
    """Sample a named or tabulated initial profile on the space grid."""
    if isinstance(spec, str):
        if spec == "sin":
            return np.sin(grid.x())
        if spec == "zero":
            return np.zeros(grid.Nx + 1)
        raise ConfigurationError(f"unknown profile name {spec!r}")
    samples = np.asarray(spec, dtype=float)
    if samples.shape != (grid.Nx + 1,):
        raise ConfigurationError(
            f"tabulated profile has {samples.size} samples, grid needs {grid.Nx + 1}"
        )
    return samples.copy()


def feedback_kappa(K, state, dx):
    """Trapezoidal quadrature of the feedback integral int k(0,y) u(y) dy."""
    K = np.asarray(K, dtype=float)
    state = np.asarray(state, dtype=float)
    if K.shape != state.shape:
        raise UsageError("gain and state lengths differ")
    return float(np.trapezoid(K * state, dx=dx))


def _fit_gain(vec, L, Nx):
    vec = np.asarray(vec, dtype=float)
    if vec.shape == (Nx + 1,):
        return vec
    src = np.linspace(0.0, L, vec.size)
    return np.interp(np.linspace(0.0, L, Nx + 1), src, vec)


def run(config, gains=None):
    """Time-march the configured scenario and record the full trajectory."""
    if config.mode not in SIM_MODES:
        raise ConfigurationError(f"unknown mode {config.mode!r}")
    grid = config.grid()
    ops = build_operators(grid, config.scheme_mode)
    dx, dt, Nx, Nt = grid.dx, grid.dt, grid.Nx, grid.Nt

    u = initial_profile(config.u0, grid)
    has_observer = config.mode != "uncontrolled"
    if has_observer:
        if gains is None:
            raise UsageError(f"mode {config.mode} needs gain vectors")
        K = _fit_gain(gains.K, config.L, Nx)
        P1 = _fit_gain(gains.P1, config.L, Nx)
        o = initial_profile(config.uhat0, grid)

    plant = np.empty((Nt + 1, Nx + 1))
    observer = np.empty((Nt + 1, Nx + 1)) if has_observer else None
    control = np.zeros(Nt + 1)
    output_u = np.zeros(Nt + 1)
    output_o = np.zeros(Nt + 1)

    plant[0] = u
    output_u[0] = u[Nx]
    if has_observer:
        observer[0] = o
        output_o[0] = o[Nx]

    def kappa_at(idx):
        if config.mode == "output_feedback":
            return feedback_kappa(K, observer[idx], dx)
        if config.mode == "state_feedback":
            return feedback_kappa(K, plant[idx], dx)
        return 0.0

    control[0] = kappa_at(0)
    zero_rhs = np.zeros(Nx + 1)

    for i in range(Nt):
        kap = control[i]
        y_u = plant[i, Nx]
        try:
            if has_observer:
                y_o = observer[i, Nx]
                if config.scheme_mode == "paper_literal":
                    inj = P1 * (y_u - y_o)
                else:
                    inj = -dt * P1 * (y_u - y_o)
                o_new = fixed_point_step(ops, observer[i], inj, config.Niter,
                                         config.nonlinear)
            u_new = fixed_point_step(ops, plant[i], zero_rhs, config.Niter,
                                     config.nonlinear)
        except BlowUpError as exc:
            raise BlowUpError(
                f"blow-up advancing to step {i + 1} (t={(i + 1) * dt:.6g}): {exc}",
                iterate=exc.iterate, step=i + 1, time=(i + 1) * dt,
            ) from exc

        u_new[0] = kap
        u_new = apply_right_boundary(u_new)
        plant[i + 1] = u_new
        output_u[i + 1] = y_u
        if has_observer:
            o_new[0] = kap
            o_new = apply_right_boundary(o_new)
            observer[i + 1] = o_new
            output_o[i + 1] = y_o
        control[i + 1] = kappa_at(i + 1)

    norm_u = np.array([analysis.l2_norm(plant[i], dx) for i in range(Nt + 1)])
    if has_observer:
        norm_uhat = np.array([analysis.l2_norm(observer[i], dx)
                              for i in range(Nt + 1)])
        norm_err = np.array([analysis.l2_norm(plant[i] - observer[i], dx)
                             for i in range(Nt + 1)])
    else:
        norm_uhat = np.zeros(Nt + 1)
        norm_err = norm_u.copy()

    return Trajectory(config=config, times=grid.t(), plant=plant,
                      observer=observer, control=control,
                      output_u=output_u, output_o=output_o,
                      norm_u=norm_u, norm_uhat=norm_uhat, norm_err=norm_err)
