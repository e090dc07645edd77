"""Binary scenario tree: an exact finite model of the driving noise.

Level k holds 2^k nodes, each with probability 2^-k.  Node n at level k+1
descends from node n//2; odd child indices take the increment +sqrt(dt),
even indices -sqrt(dt).  With these two-point increments conditional
expectations are plain child averages and the martingale representation
is an exact two-equations-two-unknowns solve, so duality and control
closure can be tested to machine precision instead of Monte-Carlo noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ResourceLimitError
from .mesh import Mesh

DEFAULT_DEPTH_CAP = 16


@dataclass(frozen=True)
class ScenarioTree:
    """Binary increment tree with ``depth`` steps on [0, T]."""

    depth: int
    T: float

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be at least 1, got {self.depth}")
        if self.T <= 0:
            raise ValueError(f"final time must be positive, got {self.T}")

    @property
    def dt(self) -> float:
        return self.T / self.depth

    @property
    def increment(self) -> float:
        return float(np.sqrt(self.dt))

    def num_nodes(self, level: int) -> int:
        self._check_level(level)
        return 1 << level

    def node_probability(self, level: int) -> float:
        self._check_level(level)
        return 2.0 ** (-level)

    def edge_signs(self, level: int) -> np.ndarray:
        """Signs of the increments leading into the level's nodes (+1 odd, -1 even)."""
        if not 1 <= level <= self.depth:
            raise ValueError(f"level must be in 1..{self.depth}, got {level}")
        idx = np.arange(1 << level)
        return np.where(idx % 2 == 1, 1.0, -1.0)

    def parents(self, level: int) -> np.ndarray:
        if not 1 <= level <= self.depth:
            raise ValueError(f"level must be in 1..{self.depth}, got {level}")
        return np.arange(1 << level) // 2

    def _check_level(self, level: int):
        if not 0 <= level <= self.depth:
            raise ValueError(f"level must be in 0..{self.depth}, got {level}")


def build_tree(depth: int, T: float, depth_cap: int = DEFAULT_DEPTH_CAP) -> ScenarioTree:
    """Tree with ``depth`` steps; refuses depths whose 2^depth leaves exceed the cap."""
    if depth > depth_cap:
        raise ResourceLimitError(
            f"tree depth {depth} exceeds cap {depth_cap} "
            f"({2**depth} leaves; raise the cap explicitly if intended)"
        )
    return ScenarioTree(depth=depth, T=T)


def expectation(tree: ScenarioTree, level: int, values) -> float:
    """Equal-weight average over the level's nodes.

    ``values`` is either an array whose first axis enumerates the nodes or
    a callable on node indices.
    """
    count = tree.num_nodes(level)
    if callable(values):
        values = np.array([values(n) for n in range(count)], dtype=float)
    else:
        values = np.asarray(values, dtype=float)
    if values.shape[0] != count:
        raise ValueError(f"level {level} has {count} nodes, got {values.shape[0]} values")
    return float(values.mean(axis=0)) if values.ndim == 1 else values.mean(axis=0)


def martingale_coeff(z_plus, z_minus, dt: float):
    """Conditional mean and martingale coefficient from the two child values.

    Solves z_child = mean + coeff * (+-sqrt(dt)) exactly for both children.
    """
    z_plus = np.asarray(z_plus, dtype=float)
    z_minus = np.asarray(z_minus, dtype=float)
    mean = 0.5 * (z_plus + z_minus)
    coeff = (z_plus - z_minus) / (2.0 * np.sqrt(dt))
    return mean, coeff


@dataclass
class AdaptedField:
    """Tree-indexed grid values: one interior vector per node, per level.

    ``levels[k]`` has shape (2^k, N).  Adaptedness is structural: the entry
    for node n at level k is a single value, so it cannot depend on signs
    drawn after level k.
    """

    tree: ScenarioTree
    mesh: Mesh
    levels: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        for k, arr in enumerate(self.levels):
            expected = (1 << k, self.mesh.N)
            if arr.shape != expected:
                raise ValueError(f"level {k} values must have shape {expected}, got {arr.shape}")

    @classmethod
    def zeros(cls, tree: ScenarioTree, mesh: Mesh, num_levels: int | None = None) -> "AdaptedField":
        if num_levels is None:
            num_levels = tree.depth + 1
        return cls(tree, mesh, [np.zeros((1 << k, mesh.N)) for k in range(num_levels)])

    @classmethod
    def random(cls, tree: ScenarioTree, mesh: Mesh, rng: np.random.Generator,
               num_levels: int | None = None, modes: int = 0, scale: float = 1.0) -> "AdaptedField":
        """Seeded nodewise samples, adapted by construction.

        ``modes=0`` draws independent values per point; ``modes=J`` draws
        per-node coefficients of the first J Dirichlet sine modes, which
        gives families comparable across mesh refinements.
        """
        if num_levels is None:
            num_levels = tree.depth + 1
        levels = []
        if modes > 0:
            basis = np.sin(np.outer(np.arange(1, modes + 1) * np.pi, mesh.interior))
        for k in range(num_levels):
            if modes > 0:
                coeff = rng.standard_normal((1 << k, modes))
                levels.append(scale * coeff @ basis)
            else:
                levels.append(scale * rng.standard_normal((1 << k, mesh.N)))
        return cls(tree, mesh, levels)

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def total_values(self) -> int:
        return sum(arr.size for arr in self.levels)

    def copy(self) -> "AdaptedField":
        return AdaptedField(self.tree, self.mesh, [arr.copy() for arr in self.levels])


def tree_inner(tree: ScenarioTree, mesh: Mesh, level: int, a: np.ndarray, b: np.ndarray) -> float:
    """Probability-weighted mesh inner product of two level-k node arrays."""
    count = tree.num_nodes(level)
    a = np.asarray(a, dtype=float).reshape(count, mesh.N)
    b = np.asarray(b, dtype=float).reshape(count, mesh.N)
    return float(mesh.h * (a * b).sum() / count)


def time_pairing(tree: ScenarioTree, mesh: Mesh, a: AdaptedField, b: AdaptedField,
                 mask=None) -> float:
    """Left-endpoint time quadrature of the expected mesh pairing of two fields."""
    steps = min(a.num_levels, b.num_levels, tree.depth)
    total = 0.0
    for k in range(steps):
        prod = a.levels[k] * b.levels[k]
        if mask is not None:
            prod = prod * mask
        total += tree.dt * mesh.h * prod.sum() / tree.num_nodes(k)
    return float(total)
