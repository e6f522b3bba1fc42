"""Uniform grids: the triangular kernel domain and the space-time box."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

MIN_TRIANGLE_M = 8


@dataclass(frozen=True)
class TriangleGrid:
    """Uniform grid on the triangle {(x, y): 0 <= x <= y <= L}.

    Nodes are index pairs (i, j) with 0 <= i <= j <= M and coordinates
    (i*h, j*h), h = L/M.  There are (M+1)(M+2)/2 of them.
    """

    L: float
    M: int

    @property
    def h(self):
        return self.L / self.M

    @property
    def n_nodes(self):
        return (self.M + 1) * (self.M + 2) // 2

    def coords(self):
        """1-D array of the M+1 per-side coordinates i*h."""
        return np.linspace(0.0, self.L, self.M + 1)

    def node_indices(self):
        """All (i, j) pairs in row-major order: i ascending, then j >= i."""
        return [(i, j) for i in range(self.M + 1) for j in range(i, self.M + 1)]


def build_triangle_grid(L, M):
    """Validate (L, M) and build the triangular kernel grid."""
    if not L > 0:
        raise ConfigurationError(f"domain length must be positive, got L={L}")
    if M < MIN_TRIANGLE_M:
        raise ConfigurationError(
            f"triangle grid needs at least M={MIN_TRIANGLE_M} subdivisions, got {M}"
        )
    return TriangleGrid(L=float(L), M=int(M))


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform space-time grid for the simulation.

    State vectors carry Nx+1 samples at x_j = j*dx; index 0 is the control
    end, index Nx the measurement end.
    """

    L: float
    Nx: int
    Tfinal: float
    Nt: int

    def __post_init__(self):
        if self.L <= 0 or self.Tfinal <= 0:
            raise ConfigurationError("L and Tfinal must be positive")
        if self.Nx < 2 or self.Nt < 1:
            raise ConfigurationError("need Nx >= 2 and Nt >= 1")

    @property
    def dx(self):
        return self.L / self.Nx

    @property
    def dt(self):
        return self.Tfinal / self.Nt

    def x(self):
        return np.linspace(0.0, self.L, self.Nx + 1)

    def t(self):
        return np.linspace(0.0, self.Tfinal, self.Nt + 1)
