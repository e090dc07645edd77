"""Drift-implicit scheme for the controlled forward system on the tree.

Each step solves (I - dt*(second difference + a1)) y_next = y + dt*chi*u
+ (a2*y + v)*dB with the noise and both controls explicit, so the map
(y0, u, v) -> states is affine and every node-level solve is tridiagonal.
Coefficients are sampled at the left endpoint of each step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .mesh import Mesh
from .discrete_calc import solve_drift_implicit
from .noise_tree import AdaptedField, ScenarioTree


@dataclass(frozen=True)
class OmegaRegion:
    """Control window: the interior points falling in an open interval."""

    mesh: Mesh
    interval: tuple[float, float]

    def __post_init__(self):
        a, b = self.interval
        if not 0.0 <= a < b <= 1.0:
            raise ConfigurationError(f"control interval must satisfy 0 <= a < b <= 1, got {self.interval}")
        if not self.mask.any():
            raise ConfigurationError(
                f"control interval {self.interval} contains no interior points at N={self.mesh.N}"
            )

    @property
    def mask(self) -> np.ndarray:
        x = self.mesh.interior
        a, b = self.interval
        return (x > a) & (x < b)

    @property
    def indicator(self) -> np.ndarray:
        return self.mask.astype(float)


class Coefficients:
    """Reaction coefficients per time level, optionally per node.

    ``a1_levels[k]`` and ``a2_levels[k]`` have shape (1, N) for deterministic
    coefficients or (2^k, N) for adapted ones.
    """

    def __init__(self, tree: ScenarioTree, mesh: Mesh,
                 a1_levels: list[np.ndarray], a2_levels: list[np.ndarray]):
        if len(a1_levels) != tree.depth or len(a2_levels) != tree.depth:
            raise ConfigurationError("coefficients must provide one array per time step")
        for k, (a1, a2) in enumerate(zip(a1_levels, a2_levels)):
            for arr in (a1, a2):
                if arr.ndim != 2 or arr.shape[1] != mesh.N or arr.shape[0] not in (1, 1 << k):
                    raise ConfigurationError(
                        f"coefficient at level {k} must have shape (1, {mesh.N}) or "
                        f"({1 << k}, {mesh.N}), got {arr.shape}"
                    )
        self.tree = tree
        self.mesh = mesh
        self.a1_levels = a1_levels
        self.a2_levels = a2_levels

    @classmethod
    def zero(cls, tree: ScenarioTree, mesh: Mesh) -> "Coefficients":
        z = [np.zeros((1, mesh.N)) for _ in range(tree.depth)]
        return cls(tree, mesh, z, [a.copy() for a in z])

    @classmethod
    def from_functions(cls, tree: ScenarioTree, mesh: Mesh, f1, f2) -> "Coefficients":
        """Deterministic coefficients a(x, t) sampled at left endpoints."""
        x = mesh.interior
        a1 = [np.asarray(f1(x, k * tree.dt), dtype=float).reshape(1, mesh.N) for k in range(tree.depth)]
        a2 = [np.asarray(f2(x, k * tree.dt), dtype=float).reshape(1, mesh.N) for k in range(tree.depth)]
        return cls(tree, mesh, a1, a2)

    @classmethod
    def constant(cls, tree: ScenarioTree, mesh: Mesh, c1: float, c2: float) -> "Coefficients":
        return cls.from_functions(tree, mesh, lambda x, t: np.full_like(x, c1),
                                  lambda x, t: np.full_like(x, c2))

    @classmethod
    def adapted_random(cls, tree: ScenarioTree, mesh: Mesh, rng: np.random.Generator,
                       mag1: float, mag2: float) -> "Coefficients":
        """Nodewise uniform coefficients in [-mag, mag], adapted by construction."""
        a1 = [mag1 * rng.uniform(-1, 1, size=(1 << k, mesh.N)) for k in range(tree.depth)]
        a2 = [mag2 * rng.uniform(-1, 1, size=(1 << k, mesh.N)) for k in range(tree.depth)]
        return cls(tree, mesh, a1, a2)

    def at(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        return self.a1_levels[level], self.a2_levels[level]

    @property
    def sup_norm(self) -> float:
        """|a1|_inf + |a2|_inf over all levels and nodes."""
        m1 = max((np.abs(a).max() for a in self.a1_levels), default=0.0)
        m2 = max((np.abs(a).max() for a in self.a2_levels), default=0.0)
        return float(m1 + m2)

    def validate_dominance(self):
        """Diagonal dominance of the implicit step: dt * max|a1| < 1."""
        m1 = max((np.abs(a).max() for a in self.a1_levels), default=0.0)
        if self.tree.dt * m1 >= 1.0:
            raise ConfigurationError(
                f"dt*max|a1| = {self.tree.dt * m1:.6g} >= 1 breaks diagonal dominance; "
                "reduce the coefficient magnitude or increase the tree depth"
            )


@dataclass
class ControlPair:
    """Drift control supported in the window, diffusion control everywhere."""

    u: AdaptedField
    v: AdaptedField
    region: OmegaRegion

    def __post_init__(self):
        outside = ~self.region.mask
        for k, arr in enumerate(self.u.levels):
            if arr[:, outside].any():
                raise ConfigurationError(f"drift control has support outside the window at level {k}")

    @classmethod
    def zero(cls, tree: ScenarioTree, mesh: Mesh, region: OmegaRegion) -> "ControlPair":
        return cls(AdaptedField.zeros(tree, mesh, tree.depth),
                   AdaptedField.zeros(tree, mesh, tree.depth), region)


@dataclass
class ForwardSolution:
    states: AdaptedField

    @property
    def terminal(self) -> np.ndarray:
        return self.states.levels[-1]


def forward_step(mesh: Mesh, dt: float, y: np.ndarray, u: np.ndarray, v: np.ndarray,
                 a1: np.ndarray, a2: np.ndarray, indicator: np.ndarray,
                 sign: float) -> np.ndarray:
    """One drift-implicit step along the edge with increment sign*sqrt(dt)."""
    rhs = y + dt * indicator * u + (a2 * y + v) * (sign * np.sqrt(dt))
    return solve_drift_implicit(mesh, dt, a1, rhs)


def solve_forward(y0: np.ndarray, controls: ControlPair | None, coeffs: Coefficients,
                  tree: ScenarioTree, mesh: Mesh) -> ForwardSolution:
    """Propagate the state through every tree node; affine in (y0, u, v)."""
    coeffs.validate_dominance()
    y0 = np.asarray(y0, dtype=float).reshape(mesh.N)
    dt, root_dt = tree.dt, np.sqrt(tree.dt)
    indicator = controls.region.indicator if controls is not None else None

    levels = [y0[np.newaxis, :].copy()]
    for k in range(tree.depth):
        y = levels[k]
        a1, a2 = coeffs.at(k)
        drive = a2 * y
        if controls is not None:
            drive = drive + controls.v.levels[k]
        base = y.copy()
        if controls is not None:
            base += dt * indicator * controls.u.levels[k]
        rhs_minus = base - root_dt * drive
        rhs_plus = base + root_dt * drive

        children = np.empty((2 << k, mesh.N))
        children[0::2] = rhs_minus
        children[1::2] = rhs_plus
        a1_child = np.repeat(a1, 2, axis=0) if a1.shape[0] > 1 else a1
        children = solve_drift_implicit(mesh, dt, a1_child, children)
        levels.append(children)

    return ForwardSolution(states=AdaptedField(tree, mesh, levels))


def expected_energy(tree: ScenarioTree, mesh: Mesh, level_values: np.ndarray) -> float:
    """E of the squared mesh norm of a level's node values."""
    vals = np.asarray(level_values, dtype=float)
    return float(mesh.h * (vals * vals).sum() / vals.shape[0])


def energy_growth_rate(sol: ForwardSolution, coeffs: Coefficients) -> float:
    """Measured constant c with E||y(t)||^2 <= e^(c*(1+A)*t) * E||y0||^2.

    Returns 0 when the initial energy is zero or no growth occurs.
    """
    tree, mesh = sol.states.tree, sol.states.mesh
    e0 = expected_energy(tree, mesh, sol.states.levels[0])
    if e0 == 0.0:
        return 0.0
    a_norm = coeffs.sup_norm
    worst = 0.0
    for k in range(1, tree.depth + 1):
        ek = expected_energy(tree, mesh, sol.states.levels[k])
        t = k * tree.dt
        if ek > e0:
            worst = max(worst, np.log(ek / e0) / ((1.0 + a_norm) * t))
    return float(worst)
