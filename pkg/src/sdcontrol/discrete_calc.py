"""Staggered difference/average operators and the tridiagonal step solver.

Primal grid functions live on the N+2 closure points (boundary values
stored explicitly); dual grid functions live on the N+1 star half-points.
The difference and average operators map primal -> star and star -> interior.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import SingularSystemError
from .mesh import Mesh, integrate

_PIVOT_RTOL = 1e-13


@dataclass(frozen=True)
class GridFunction:
    """Real values on the closure points of a mesh (length N+2)."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.mesh.N + 2,):
            raise ValueError(
                f"grid function needs {self.mesh.N + 2} closure values, got shape {vals.shape}"
            )
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, mesh: Mesh, f: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return cls(mesh, np.asarray(f(mesh.closure), dtype=float))

    @classmethod
    def from_interior(cls, mesh: Mesh, interior, boundary=(0.0, 0.0)) -> "GridFunction":
        vals = np.empty(mesh.N + 2)
        vals[0], vals[-1] = boundary
        vals[1:-1] = np.asarray(interior, dtype=float)
        return cls(mesh, vals)

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1]


@dataclass(frozen=True)
class DualGridFunction:
    """Real values on the star half-points of a mesh (length N+1)."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.mesh.N + 1,):
            raise ValueError(
                f"dual grid function needs {self.mesh.N + 1} star values, got shape {vals.shape}"
            )
        object.__setattr__(self, "values", vals)


def apply_Dh(u: GridFunction) -> DualGridFunction:
    """Centered difference, closure points -> star half-points."""
    v = np.diff(u.values) / u.mesh.h
    return DualGridFunction(u.mesh, v)


def apply_Ah(u: GridFunction) -> DualGridFunction:
    """Two-point average, closure points -> star half-points."""
    v = 0.5 * (u.values[1:] + u.values[:-1])
    return DualGridFunction(u.mesh, v)


def apply_Dh_dual(v: DualGridFunction) -> np.ndarray:
    """Centered difference, star half-points -> interior points."""
    return np.diff(v.values) / v.mesh.h


def apply_Ah_dual(v: DualGridFunction) -> np.ndarray:
    """Two-point average, star half-points -> interior points."""
    return 0.5 * (v.values[1:] + v.values[:-1])


def apply_Dh2(u: GridFunction) -> np.ndarray:
    """Three-point second difference at the interior points."""
    w = u.values
    return (w[2:] - 2.0 * w[1:-1] + w[:-2]) / u.mesh.h**2


def laplacian_interior(interior: np.ndarray, h: float) -> np.ndarray:
    """Second difference of interior values with homogeneous Dirichlet padding.

    Vectorized over leading batch axes; the last axis is space.
    """
    out = -2.0 * interior
    out[..., :-1] += interior[..., 1:]
    out[..., 1:] += interior[..., :-1]
    return out / h**2


def leibniz_residuals(u: GridFunction, v: GridFunction) -> tuple[float, float, float]:
    """Max-abs residuals of the three product identities.

    Product rule for the difference on the star points, product rule for
    the average on the star points, and the average/second-difference
    reconstruction of the identity on the double-ring points.
    """
    mesh = u.mesh
    uv = GridFunction(mesh, u.values * v.values)
    du, dv = apply_Dh(u).values, apply_Dh(v).values
    au, av = apply_Ah(u).values, apply_Ah(v).values
    q = mesh.h**2 / 4.0

    res1 = np.abs(apply_Dh(uv).values - (du * av + au * dv)).max()
    res2 = np.abs(apply_Ah(uv).values - (au * av + q * du * dv)).max()

    recon = apply_Ah_dual(apply_Ah(u)) - q * apply_Dh2(u)
    diff3 = np.abs(u.interior - recon)[1:-1]
    res3 = diff3.max() if diff3.size else 0.0
    return float(res1), float(res2), float(res3)


def ibp_residuals(u: GridFunction, v: DualGridFunction) -> tuple[float, float]:
    """Residuals of the two summation-by-parts identities.

    The difference identity picks up a boundary term weighted by the outward
    normal; the average identity picks up -h/2 times the plain boundary sum.
    """
    mesh = u.mesh
    left, right = mesh.boundary_samples()
    u_bnd = np.array([u.values[0], u.values[-1]])

    lhs1 = integrate(mesh, u.interior * apply_Dh_dual(v), "interior")
    bnd1 = integrate(
        mesh,
        u_bnd * np.array([left.trace_of(v.values) * left.normal,
                          right.trace_of(v.values) * right.normal]),
        "boundary",
    )
    rhs1 = -integrate(mesh, apply_Dh(u).values * v.values, "star") + bnd1

    lhs2 = integrate(mesh, u.interior * apply_Ah_dual(v), "interior")
    bnd2 = integrate(
        mesh,
        u_bnd * np.array([left.trace_of(v.values), right.trace_of(v.values)]),
        "boundary",
    )
    rhs2 = integrate(mesh, apply_Ah(u).values * v.values, "star") - 0.5 * mesh.h * bnd2

    return float(abs(lhs1 - rhs1)), float(abs(lhs2 - rhs2))


def consistency_orders(h0: float = 1 / 16, halvings: int = 4,
                       window: tuple[float, float] = (0.25, 0.75)) -> dict[str, float]:
    """Observed convergence orders of the staggered operators on sin(pi*x).

    Halves h ``halvings`` times from ``h0``, measures the max error against
    the exact derivative over an interior window, and returns the
    least-squares slope of log(error) vs log(h) per operator.  All four
    combinations are second order.
    """
    spacings = [h0 / 2**j for j in range(halvings + 1)]
    errors = {name: [] for name in
              ("first_difference", "second_difference", "averaged_difference", "double_average")}
    lo, hi = window
    for h in spacings:
        N = round(1.0 / h) - 1
        mesh = Mesh(N)
        u = GridFunction(mesh, np.sin(np.pi * mesh.closure))
        x_int = mesh.interior
        x_star = 0.5 * (mesh.closure[1:] + mesh.closure[:-1])
        in_int = (x_int >= lo) & (x_int <= hi)
        in_star = (x_star >= lo) & (x_star <= hi)

        d1 = apply_Dh(u).values
        errors["first_difference"].append(
            np.abs(d1 - np.pi * np.cos(np.pi * x_star))[in_star].max())
        errors["second_difference"].append(
            np.abs(apply_Dh2(u) + np.pi**2 * np.sin(np.pi * x_int))[in_int].max())
        errors["averaged_difference"].append(
            np.abs(apply_Ah_dual(apply_Dh(u)) - np.pi * np.cos(np.pi * x_int))[in_int].max())
        errors["double_average"].append(
            np.abs(apply_Ah_dual(apply_Ah(u)) - np.sin(np.pi * x_int))[in_int].max())

    log_h = np.log(spacings)
    return {name: float(np.polyfit(log_h, np.log(errs), 1)[0])
            for name, errs in errors.items()}


def solve_tridiagonal(sub, diag, sup, rhs, transpose: bool = False) -> np.ndarray:
    """Thomas elimination without pivoting, vectorized over batch rows.

    ``sub``/``diag``/``sup`` may be 1-D (shared matrix) or carry leading
    batch axes matching ``rhs``.  ``transpose=True`` solves with the
    transposed matrix by swapping the off-diagonals.  Raises
    SingularSystemError when a pivot falls below the dominance threshold,
    which the drift-implicit steppers rule out up front but the
    anti-diffusive source stepper can hit.
    """
    if transpose:
        sub, sup = sup, sub
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[-1]
    sub = np.broadcast_to(np.asarray(sub, dtype=float), rhs.shape[:-1] + (n - 1,))
    sup = np.broadcast_to(np.asarray(sup, dtype=float), rhs.shape[:-1] + (n - 1,))
    diag = np.broadcast_to(np.asarray(diag, dtype=float), rhs.shape)

    scale = np.abs(diag).max()
    piv = np.empty_like(diag)
    x = np.array(rhs, dtype=float)
    piv[..., 0] = diag[..., 0]
    for i in range(1, n):
        if np.any(np.abs(piv[..., i - 1]) <= _PIVOT_RTOL * scale):
            raise SingularSystemError(
                f"vanishing pivot at row {i - 1} (|pivot| <= {_PIVOT_RTOL:g} * {scale:g})"
            )
        m = sub[..., i - 1] / piv[..., i - 1]
        piv[..., i] = diag[..., i] - m * sup[..., i - 1]
        x[..., i] = x[..., i] - m * x[..., i - 1]
    if np.any(np.abs(piv[..., n - 1]) <= _PIVOT_RTOL * scale):
        raise SingularSystemError(f"vanishing pivot at row {n - 1}")
    x[..., n - 1] = x[..., n - 1] / piv[..., n - 1]
    for i in range(n - 2, -1, -1):
        x[..., i] = (x[..., i] - sup[..., i] * x[..., i + 1]) / piv[..., i]
    return x


def drift_implicit_bands(mesh: Mesh, dt: float, a1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bands of I - dt*(second difference + a1*), Dirichlet rows eliminated."""
    N, h = mesh.N, mesh.h
    a1 = np.asarray(a1, dtype=float)
    off = np.full(N - 1, -dt / h**2)
    diag = 1.0 + 2.0 * dt / h**2 - dt * a1
    return off, diag, off


def solve_drift_implicit(mesh: Mesh, dt: float, a1, rhs, transpose: bool = False) -> np.ndarray:
    """Solve (I - dt*(second difference + a1*)) x = rhs on the interior.

    ``a1`` is the interior reaction coefficient (length N, or batched like
    ``rhs``); ``transpose=True`` solves with the transposed matrix.  dt = 0
    degenerates to the identity.
    """
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[-1] != mesh.N:
        raise ValueError(f"rhs must have {mesh.N} interior values, got {rhs.shape[-1]}")
    if dt == 0.0:
        return rhs.copy()
    a1 = np.asarray(a1, dtype=float)
    if a1.ndim > 1:
        a1 = np.broadcast_to(a1, rhs.shape)
    sub, diag, sup = drift_implicit_bands(mesh, dt, a1)
    try:
        return solve_tridiagonal(sub, diag, sup, rhs, transpose=transpose)
    except SingularSystemError as exc:
        bound = float(np.abs(a1).max()) if a1.size else 0.0
        raise SingularSystemError(
            f"{exc} (dt={dt:g}, h={mesh.h:g}, max|a1|={bound:g})"
        ) from exc
