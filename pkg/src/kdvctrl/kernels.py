"""Gain-kernel boundary-value problems on the triangle 0 <= x <= y <= L.

Three kernel kinds are solved, all sharing the third-order operator
v_xxx + v_yyy + v_x + v_y on the triangle, a vanishing diagonal value,
and a linear normal-derivative condition on the diagonal:

* ``controller_k``: rhs -lam*v, edge condition v(x,L) + v_yy(x,L) = 0;
  its trace k(0, .) is the boundary feedback gain.
* ``observer_p``: rhs +lam*v, edge condition v(0,y) = 0; the output
  injection gain is p1(x) = p_yy(x,L) + p(x,L).  Solved through the
  reflected problem in (L-y, L-x) coordinates, where the vanishing edge
  becomes the top edge of the triangle.
* ``inverse_l``: rhs +lam*v, same edge condition as controller_k; used to
  undo the controller transform for diagnostics.

The solver is finite-difference collocation: unknowns at triangle nodes,
boundary values that vanish identically are eliminated exactly, interior
nodes carry the discretized PDE, and the rectangular system is solved in
the least-squares sense after row normalization.  ``kernel_residuals``
re-evaluates every condition with stencils independent of the assembly.
"""

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, ResolutionError, SolverError, UsageError
from .grids import TriangleGrid, build_triangle_grid

KERNEL_KINDS = ("controller_k", "observer_p", "inverse_l")

SOLVER_VERSION = "fdls-2"

# Relative tolerance for conditions that the solver enforces exactly
# (eliminated unknowns): diagonal values and, for observer_p, the x=0 edge.
DIAG_TOL = 1e-8


@dataclass(frozen=True)
class ResidualReport:
    """Max absolute residuals per condition family, from independent stencils."""

    h: float
    max_abs_value: float
    interior: float
    diag_value: float
    diag_neumann: float
    edge: float
    accept_tol: float
    extras: dict = field(default_factory=dict)

    def as_lines(self):
        out = [
            f"h={self.h!r}",
            f"max_abs_value={self.max_abs_value!r}",
            f"interior={self.interior!r}",
            f"diag_value={self.diag_value!r}",
            f"diag_neumann={self.diag_neumann!r}",
            f"edge={self.edge!r}",
            f"accept_tol={self.accept_tol!r}",
        ]
        for key in sorted(self.extras):
            out.append(f"extras.{key}={self.extras[key]!r}")
        return out


@dataclass(frozen=True)
class KernelTable:
    """Sampled kernel on a triangular grid.

    ``values[i, j]`` holds the kernel at (i*h, j*h) for j >= i; entries
    below the diagonal are NaN and must not be read.  ``d_yy_at_L[i]`` is
    the one-sided second y-derivative on the edge y = L.
    """

    kind: str
    grid: TriangleGrid
    lam: float
    values: np.ndarray
    d_yy_at_L: np.ndarray
    residual_report: ResidualReport | None = None

    def value(self, i, j):
        return float(self.values[i, j])


@dataclass(frozen=True)
class GainVectors:
    """Feedback gain K_j = k(0, y_j) and injection gain P1_i = p1(x_i)."""

    K: np.ndarray
    P1: np.ndarray
    lam: float
    L: float
    source_M: int


# ---------------------------------------------------------------------------
# Finite-difference weights


@lru_cache(maxsize=None)
def _fd_weights(offsets, order):
    """Weights w with sum(w * f(m+o)) ~ h^order * f^(order)(m)."""
    n = len(offsets)
    if n <= order:
        raise ResolutionError(f"{n} points cannot resolve derivative order {order}")
    A = np.array([[o**m for o in offsets] for m in range(n)], dtype=float)
    b = np.zeros(n)
    b[order] = math.factorial(order)
    return np.linalg.solve(A, b)


def _window(m, lo, hi, npts):
    """Offsets of an npts-wide window inside [lo, hi], centered on m if possible."""
    if hi - lo + 1 < npts:
        return None
    start = m - (npts - 1) // 2
    start = max(lo, min(start, hi - npts + 1))
    return tuple(k - m for k in range(start, start + npts))


# ---------------------------------------------------------------------------
# Problem descriptions

_EDGE_ROBIN_TOP = "robin_top"   # v(x,L) + v_yy(x,L) = 0
_EDGE_VALUE_TOP = "value_top"   # v(x,L) = 0
_EDGE_VALUE_LEFT = "value_left"  # v(0,y) = 0


@dataclass(frozen=True)
class _Problem:
    rhs_sign: float          # v_xxx+v_yyy+v_x+v_y = rhs_sign * lam * v
    neumann_slope: float     # v_x(x,x) = neumann_offset + neumann_slope * x
    neumann_offset: float
    edge: str

    def neumann(self, x):
        return self.neumann_offset + self.neumann_slope * x


def _problem_for(kind, lam, L):
    if kind == "controller_k":
        return _Problem(-1.0, -lam / 3.0, lam * L / 3.0, _EDGE_ROBIN_TOP)
    if kind == "inverse_l":
        return _Problem(+1.0, -lam / 3.0, lam * L / 3.0, _EDGE_ROBIN_TOP)
    if kind == "observer_p":
        return _Problem(+1.0, lam / 3.0, -lam * L / 3.0, _EDGE_VALUE_LEFT)
    raise UsageError(f"unknown kernel kind {kind!r}")


def _reflected_problem(lam):
    # Image of the observer_p conditions under (x,y) -> (L-y, L-x): the PDE
    # sign flips, the x=0 edge becomes the top edge, and the diagonal
    # derivative becomes v_x(x,x) = -lam*x/3 (total derivative of the zero
    # diagonal value forces v_x = -v_y there).
    return _Problem(-1.0, -lam / 3.0, 0.0, _EDGE_VALUE_TOP)


def _eliminated(problem, M):
    """Nodes whose value is identically zero and is removed from the unknowns."""
    nodes = {(i, i) for i in range(M + 1)}
    if problem.edge == _EDGE_VALUE_TOP:
        nodes |= {(i, M) for i in range(M + 1)}
    elif problem.edge == _EDGE_VALUE_LEFT:
        nodes |= {(0, j) for j in range(M + 1)}
    return nodes


# ---------------------------------------------------------------------------
# Assembly and least-squares solve


def _assemble(problem, grid, lam):
    M, h = grid.M, grid.h
    xs = grid.coords()
    zero_nodes = _eliminated(problem, M)
    col = {}
    for i in range(M + 1):
        for j in range(i, M + 1):
            if (i, j) not in zero_nodes:
                col[(i, j)] = len(col)

    rows = []      # (coeff dict col->value, rhs, family)

    def add(entries, rhs, family):
        coeffs = {}
        for node, c in entries:
            if node in zero_nodes:
                continue
            coeffs[col[node]] = coeffs.get(col[node], 0.0) + c
        rows.append((coeffs, rhs, family))

    def line_terms(m, lo, hi, order, h_pow, along_x, fixed):
        npts = min(order + 2, hi - lo + 1)
        offs = _window(m, lo, hi, npts)
        if offs is None:
            return None
        w = _fd_weights(offs, order) / h_pow
        if along_x:
            return [((m + o, fixed), wk) for o, wk in zip(offs, w)]
        return [((fixed, m + o), wk) for o, wk in zip(offs, w)]

    # Interior PDE rows.
    for i in range(M + 1):
        for j in range(i + 1, M + 1):
            if (i, j) in zero_nodes:
                continue
            if problem.edge == _EDGE_ROBIN_TOP and j == M:
                continue  # edge nodes carry the edge equation instead
            if j + 1 < 4 or M - i + 1 < 4:
                continue  # x- or y-line too short for a third derivative
            entries = []
            for order, h_pow in ((3, h**3), (1, h)):
                tx = line_terms(i, 0, j, order, h_pow, True, j)
                ty = line_terms(j, i, M, order, h_pow, False, i)
                entries.extend(tx)
                entries.extend(ty)
            entries.append(((i, j), -problem.rhs_sign * lam))
            add(entries, 0.0, "interior")

    # Diagonal normal-derivative rows, one-sided into the triangle.
    for i in range(M + 1):
        if i >= 2:
            offs = (-2, -1, 0)
            w = _fd_weights(offs, 1) / h
            entries = [((i + o, i), wk) for o, wk in zip(offs, w)]
            add(entries, problem.neumann(xs[i]), "diag_neumann")
        else:
            # v_y along the column; on the diagonal v_y = -v_x.
            offs = (0, 1, 2)
            w = _fd_weights(offs, 1) / h
            entries = [((i, i + o), wk) for o, wk in zip(offs, w)]
            add(entries, -problem.neumann(xs[i]), "diag_neumann")

    # Edge rows for the mixed value/second-derivative condition.
    if problem.edge == _EDGE_ROBIN_TOP:
        for i in range(M + 1):
            if i > M - 2 or (i, M) in zero_nodes:
                continue
            npts = 4 if i <= M - 3 else 3
            offs = tuple(range(-npts + 1, 1))
            w = _fd_weights(offs, 2) / h**2
            entries = [((i, M + o), wk) for o, wk in zip(offs, w)]
            entries.append(((i, M), 1.0))
            add(entries, 0.0, "edge")

    n = len(col)
    A = np.zeros((len(rows), n))
    b = np.zeros(len(rows))
    families = []
    for r, (coeffs, rhs, family) in enumerate(rows):
        for c, v in coeffs.items():
            A[r, c] = v
        b[r] = rhs
        families.append(family)
    return A, b, families, col, zero_nodes


def _solve_problem(problem, grid, lam):
    A, b, families, col, zero_nodes = _assemble(problem, grid, lam)
    norms = np.linalg.norm(A, axis=1)
    if not np.all(norms > 0):
        raise SolverError("assembled system has an empty row",
                          {"rows": A.shape[0], "cols": A.shape[1]})
    As = A / norms[:, None]
    bs = b / norms
    sol, _, rank, _ = scipy.linalg.lstsq(As, bs, cond=1e-12, lapack_driver="gelsy")
    if rank < As.shape[1]:
        raise SolverError(
            "kernel collocation system is rank deficient",
            {"rows": As.shape[0], "cols": As.shape[1], "rank": int(rank)},
        )

    M = grid.M
    values = np.full((M + 1, M + 1), np.nan)
    for i in range(M + 1):
        for j in range(i, M + 1):
            values[i, j] = 0.0
    for (i, j), c in col.items():
        values[i, j] = sol[c]

    resid = (As @ sol - bs) * norms
    assembly = {}
    for fam in ("interior", "diag_neumann", "edge"):
        sel = [r for r, f in enumerate(families) if f == fam]
        if sel:
            assembly[f"assembly_{fam}"] = float(np.max(np.abs(resid[sel])))
    assembly["lstsq_rank"] = int(rank)
    return values, assembly


def _edge_second_derivative(values, grid):
    """d^2 v / dy^2 on y = L via the three nodes nearest the edge, per row.

    Rows that do not reach three nodes (the two nearest the top corner) are
    filled by linear extrapolation so the returned vector is finite.
    """
    M, h = grid.M, grid.h
    out = np.full(M + 1, np.nan)
    for i in range(M - 1):
        out[i] = (values[i, M] - 2.0 * values[i, M - 1] + values[i, M - 2]) / h**2
    out[M - 1] = 2.0 * out[M - 2] - out[M - 3]
    out[M] = 2.0 * out[M - 1] - out[M - 2]
    return out


# ---------------------------------------------------------------------------
# Independent residual evaluation


def _check_third(v, m, lo, hi):
    """Third derivative along a line using the D+D+D- composition.

    Falls back to the fully one-sided third difference near line ends.
    Returns None when the line is too short.
    """
    if m - 1 >= lo and m + 2 <= hi:
        sel = (m - 1, m, m + 1, m + 2)
    elif m + 3 <= hi:
        sel = (m, m + 1, m + 2, m + 3)
    elif m - 3 >= lo:
        sel = (m - 3, m - 2, m - 1, m)
    else:
        return None
    return -v[sel[0]] + 3.0 * v[sel[1]] - 3.0 * v[sel[2]] + v[sel[3]]


def _check_first(v, m, lo, hi):
    if lo <= m - 1 and m + 1 <= hi:
        return (v[m + 1] - v[m - 1]) / 2.0
    if m + 1 <= hi:
        return v[m + 1] - v[m]
    if m - 1 >= lo:
        return v[m] - v[m - 1]
    return None


def _independent_residuals(values, grid, problem, lam):
    M, h = grid.M, grid.h
    xs = grid.coords()
    zero_nodes = _eliminated(problem, M)

    interior = 0.0
    for i in range(M + 1):
        for j in range(i + 1, M + 1):
            if (i, j) in zero_nodes:
                continue
            if problem.edge == _EDGE_ROBIN_TOP and j == M:
                continue
            xline = values[: j + 1, j]
            yline = values[i, :]
            t3x = _check_third(xline, i, 0, j)
            t3y = _check_third(yline, j, i, M)
            t1x = _check_first(xline, i, 0, j)
            t1y = _check_first(yline, j, i, M)
            if t3x is None or t3y is None or t1x is None or t1y is None:
                continue
            r = (t3x + t3y) / h**3 + (t1x + t1y) / h \
                - problem.rhs_sign * lam * values[i, j]
            interior = max(interior, abs(r))

    diag_value = max(abs(values[i, i]) for i in range(M + 1))

    diag_neumann = 0.0
    for i in range(2, M + 1):
        dv = (3.0 * values[i, i] - 4.0 * values[i - 1, i] + values[i - 2, i]) / (2.0 * h)
        diag_neumann = max(diag_neumann, abs(dv - problem.neumann(xs[i])))

    edge = 0.0
    if problem.edge == _EDGE_ROBIN_TOP:
        for i in range(M - 2):
            dyy = (2.0 * values[i, M] - 5.0 * values[i, M - 1]
                   + 4.0 * values[i, M - 2] - values[i, M - 3]) / h**2
            edge = max(edge, abs(values[i, M] + dyy))
    elif problem.edge == _EDGE_VALUE_TOP:
        edge = max(abs(values[i, M]) for i in range(M + 1))
    elif problem.edge == _EDGE_VALUE_LEFT:
        edge = max(abs(values[0, j]) for j in range(M + 1))

    max_abs = float(np.nanmax(np.abs(values)))
    return ResidualReport(
        h=h,
        max_abs_value=max_abs,
        interior=float(interior),
        diag_value=float(diag_value),
        diag_neumann=float(diag_neumann),
        edge=float(edge),
        accept_tol=0.05 * max_abs / h,
    )


def kernel_residuals(table):
    """Re-evaluate the BVP conditions of ``table`` with independent stencils."""
    problem = _problem_for(table.kind, table.lam, table.grid.L)
    report = _independent_residuals(table.values, table.grid, problem, table.lam)
    extras = dict(report.extras)
    if table.kind == "observer_p":
        extras.update(_omitted_condition_probes(table))
    return replace(report, extras=extras)


def _omitted_condition_probes(table):
    """Report-only checks of the derivation conditions not in the final BVP.

    The consolidated observer-kernel problem drops the second diagonal
    condition and the corner condition p_x(L,L) = 0; both reduce, given the
    enforced conditions, to d/dx[p_x(x,x)] = lam/3 with zero corner value.
    """
    M, h = table.grid.M, table.grid.h
    v = table.values
    px_diag = np.full(M + 1, np.nan)
    for i in range(2, M + 1):
        px_diag[i] = (3.0 * v[i, i] - 4.0 * v[i - 1, i] + v[i - 2, i]) / (2.0 * h)
    slopes = np.diff(px_diag[2:]) / h
    dev = np.nanmax(np.abs(slopes - table.lam / 3.0)) if slopes.size else np.nan
    return {
        "diag_slope_dev": float(dev),
        "corner_dx": float(px_diag[M]),
    }


# ---------------------------------------------------------------------------
# Public solve and gain extraction


def solve_kernel(kind, lam, grid):
    """Solve the kernel BVP of the given kind on ``grid``.

    Returns a KernelTable whose residual_report carries the independently
    evaluated condition residuals.  Raises ConvergenceError when the interior
    residual exceeds the acceptance tolerance recorded in the report.
    """
    if kind not in KERNEL_KINDS:
        raise UsageError(f"unknown kernel kind {kind!r}")
    if lam < 0:
        raise UsageError(f"decay parameter must be nonnegative, got {lam}")
    if not isinstance(grid, TriangleGrid):
        grid = build_triangle_grid(*grid)

    lam = float(lam)
    if kind == "observer_p":
        reflected, extras = _solve_problem(_reflected_problem(lam), grid, lam)
        M = grid.M
        values = np.full((M + 1, M + 1), np.nan)
        for i in range(M + 1):
            for j in range(i, M + 1):
                values[i, j] = reflected[M - j, M - i]
        f_report = _independent_residuals(reflected, grid,
                                          _reflected_problem(lam), lam)
        extras["reflected_interior"] = f_report.interior
        extras["reflected_diag_neumann"] = f_report.diag_neumann
    else:
        values, extras = _solve_problem(_problem_for(kind, lam, grid.L), grid, lam)

    table = KernelTable(
        kind=kind,
        grid=grid,
        lam=lam,
        values=values,
        d_yy_at_L=_edge_second_derivative(values, grid),
    )
    report = kernel_residuals(table)
    report = replace(report, extras={**extras, **report.extras})
    if report.interior > report.accept_tol:
        raise ConvergenceError(
            f"{kind} interior residual {report.interior:.3e} exceeds "
            f"accept_tol {report.accept_tol:.3e} at M={grid.M}",
            report=report,
        )
    return replace(table, residual_report=report)


def _resample_edge(edge_values, L, M, Nx):
    if M == Nx:
        return np.array(edge_values, dtype=float, copy=True)
    src = np.linspace(0.0, L, M + 1)
    dst = np.linspace(0.0, L, Nx + 1)
    return np.interp(dst, src, edge_values)


def extract_feedback_gain(table, Nx):
    """Sample the feedback gain k(0, y) onto the Nx+1 simulation nodes."""
    if table.kind != "controller_k":
        raise UsageError(f"feedback gain needs a controller_k table, got {table.kind}")
    return _resample_edge(table.values[0, :], table.grid.L, table.grid.M, Nx)


def extract_observer_gain(table, Nx):
    """Sample the injection gain p1(x) = p_yy(x,L) + p(x,L) onto Nx+1 nodes."""
    if table.kind != "observer_p":
        raise UsageError(f"observer gain needs an observer_p table, got {table.kind}")
    if table.grid.M < 3:
        raise ResolutionError("observer gain needs at least 3 nodes per row")
    p1 = table.d_yy_at_L + table.values[:, table.grid.M]
    return _resample_edge(p1, table.grid.L, table.grid.M, Nx)


def build_gains(k_table, p_table, Nx):
    """Bundle both gains, resampled onto the simulation grid."""
    if k_table.lam != p_table.lam or k_table.grid.L != p_table.grid.L:
        raise UsageError("controller and observer tables disagree on lambda or L")
    return GainVectors(
        K=extract_feedback_gain(k_table, Nx),
        P1=extract_observer_gain(p_table, Nx),
        lam=k_table.lam,
        L=k_table.grid.L,
        source_M=k_table.grid.M,
    )


def zero_gains(lam, L, Nx, source_M=0):
    return GainVectors(K=np.zeros(Nx + 1), P1=np.zeros(Nx + 1),
                       lam=lam, L=L, source_M=source_M)


# ---------------------------------------------------------------------------
# Volterra transform application (diagnostics)


def apply_volterra(table, samples, direction):
    """Apply the triangular integral transform row-by-row with trapezoids.

    direction="forward" computes u - int_x^L k(x,y) u(y) dy (controller
    table); direction="inverse" computes w + int_x^L l(x,y) w(y) dy
    (inverse table).  ``samples`` must live on the kernel grid.
    """
    expected = {"forward": "controller_k", "inverse": "inverse_l"}
    if direction not in expected:
        raise UsageError(f"direction must be forward or inverse, got {direction!r}")
    if table.kind != expected[direction]:
        raise UsageError(f"{direction} transform needs {expected[direction]}, "
                         f"got {table.kind}")
    samples = np.asarray(samples, dtype=float)
    M, h = table.grid.M, table.grid.h
    if samples.shape != (M + 1,):
        raise UsageError(f"samples must have {M + 1} entries on the kernel grid")
    sign = -1.0 if direction == "forward" else 1.0
    out = np.empty_like(samples)
    for i in range(M + 1):
        integral = np.trapezoid(table.values[i, i:] * samples[i:], dx=h)
        out[i] = samples[i] + sign * integral
    return out


def triangle_flatten(values, M):
    """Row-major (i, then j >= i) packing of the upper-triangular values."""
    return np.concatenate([values[i, i:] for i in range(M + 1)])


def triangle_unflatten(flat, M):
    values = np.full((M + 1, M + 1), np.nan)
    pos = 0
    for i in range(M + 1):
        n = M + 1 - i
        values[i, i:] = flat[pos:pos + n]
        pos += n
    return values
