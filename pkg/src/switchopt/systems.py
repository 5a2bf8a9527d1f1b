"""State-dependent switched systems with polyhedral mode regions.

A system is a finite list of modes.  Each mode owns a region (an
intersection of affine half-spaces), a vector field, and a quadratic
running cost.  The active mode is a function of the state alone: the
dynamics switch when the trajectory crosses a region boundary, and the
state itself is continuous across switches (no jumps or resets).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

# Required constraint signs: GEQ keeps g(x) >= 0, LEQ keeps g(x) <= 0.
GEQ = 1
LEQ = -1


class InvalidInputError(ValueError):
    """A state or control contained NaN or infinity."""


@dataclass(frozen=True, eq=False)
class AffineBoundary:
    """Switching surface ``g(x) = normal . x + offset = 0``.

    Boundaries are shared between the regions they separate and are
    identified by name, so crossings can be reported against a stable id.
    """

    name: str
    normal: np.ndarray
    offset: float

    def __post_init__(self) -> None:
        normal = np.atleast_1d(np.asarray(self.normal, dtype=float))
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))
        if normal.ndim != 1 or not np.any(normal != 0.0):
            raise ValueError(f"boundary {self.name!r} needs a nonzero normal vector")
        if not np.all(np.isfinite(normal)) or not np.isfinite(self.offset):
            raise ValueError(f"boundary {self.name!r} has non-finite coefficients")

    def value(self, x: np.ndarray) -> float:
        """Signed boundary function g(x)."""
        return float(self.normal @ np.asarray(x, dtype=float) + self.offset)


@dataclass(frozen=True, eq=False)
class RegionSpec:
    """Closed polyhedral region: every ``(boundary, sign)`` pair must hold.

    ``sign`` is GEQ or LEQ and states the side of the boundary the region
    occupies.  ``witness`` is a point strictly inside, kept as a sanity
    anchor for the geometry.
    """

    mode_id: int
    constraints: tuple[tuple[AffineBoundary, int], ...]
    witness: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "constraints", tuple(self.constraints))
        witness = np.atleast_1d(np.asarray(self.witness, dtype=float))
        object.__setattr__(self, "witness", witness)
        if self.mode_id < 1:
            raise ValueError("mode ids are 1-based")
        for boundary, sign in self.constraints:
            if sign not in (GEQ, LEQ):
                raise ValueError(f"constraint sign must be GEQ or LEQ, got {sign!r}")
            if sign * boundary.value(witness) <= 0.0:
                raise ValueError(
                    f"witness of region {self.mode_id} is not strictly inside "
                    f"(violates {boundary.name!r})"
                )

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        return all(sign * b.value(x) >= -tol for b, sign in self.constraints)


@dataclass(frozen=True, eq=False)
class ModeDynamics:
    """Vector field of one mode: linear-affine ``A x + B u`` or a callback."""

    A: np.ndarray | None = None
    B: np.ndarray | None = None
    field: Callable[[np.ndarray, np.ndarray, float], np.ndarray] | None = None

    @classmethod
    def linear(cls, A, B) -> "ModeDynamics":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if B.shape[0] != A.shape[0]:
            raise ValueError("B row count must match the state dimension")
        return cls(A=A, B=B)

    @classmethod
    def general(cls, field: Callable) -> "ModeDynamics":
        return cls(field=field)

    @property
    def is_linear(self) -> bool:
        return self.A is not None

    def __call__(self, x: np.ndarray, u: np.ndarray, t: float = 0.0) -> np.ndarray:
        if self.is_linear:
            return self.A @ x + self.B @ u
        return np.asarray(self.field(x, u, t), dtype=float)


@dataclass(frozen=True, eq=False)
class StageCost:
    """Quadratic running cost ``scale * (x' Wx x + u' Wu u)``."""

    scale: float
    state_weight: np.ndarray
    control_weight: np.ndarray

    def __post_init__(self) -> None:
        Wx = np.atleast_2d(np.asarray(self.state_weight, dtype=float))
        Wu = np.atleast_2d(np.asarray(self.control_weight, dtype=float))
        object.__setattr__(self, "state_weight", Wx)
        object.__setattr__(self, "control_weight", Wu)
        object.__setattr__(self, "scale", float(self.scale))
        for name, W in (("state_weight", Wx), ("control_weight", Wu)):
            if not np.allclose(W, W.T):
                raise ValueError(f"{name} must be symmetric")
        if np.any(np.linalg.eigvalsh(Wx) < -1e-12):
            raise ValueError("state_weight must be positive semidefinite")
        if np.any(np.linalg.eigvalsh(Wu) <= 0.0):
            raise ValueError("control_weight must be positive definite")

    @classmethod
    def quadratic(cls, scale: float, n_x: int, n_u: int) -> "StageCost":
        """Identity-weight cost ``scale * (|x|^2 + |u|^2)``."""
        return cls(scale=scale, state_weight=np.eye(n_x), control_weight=np.eye(n_u))

    def value(self, x: np.ndarray, u: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return self.scale * float(x @ self.state_weight @ x + u @ self.control_weight @ u)


@dataclass(frozen=True, eq=False)
class Mode:
    region: RegionSpec
    dynamics: ModeDynamics
    cost: StageCost


@dataclass(frozen=True, eq=False)
class SwitchedSystem:
    """Modes plus horizon, control box, and optional terminal cost.

    ``fallback_mode`` is used when no region claims the state; the
    benchmark geometries cover the plane, so it is a safety net only.
    """

    modes: tuple[Mode, ...]
    horizon: float
    control_bounds: tuple[np.ndarray, np.ndarray]
    terminal_cost: Callable[[np.ndarray], float] | None = None
    fallback_mode: int = 1

    def __post_init__(self) -> None:
        modes = tuple(self.modes)
        object.__setattr__(self, "modes", modes)
        if not modes:
            raise ValueError("a system needs at least one mode")
        ids = [m.region.mode_id for m in modes]
        if ids != list(range(1, len(modes) + 1)):
            raise ValueError(f"mode ids must be contiguous starting at 1, got {ids}")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        lo = np.atleast_1d(np.asarray(self.control_bounds[0], dtype=float))
        hi = np.atleast_1d(np.asarray(self.control_bounds[1], dtype=float))
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("control_bounds must satisfy lo < hi componentwise")
        object.__setattr__(self, "control_bounds", (lo, hi))
        if not 1 <= self.fallback_mode <= len(modes):
            raise ValueError("fallback_mode must be a declared mode id")

        # Collect distinct boundaries by name (shared objects expected) and
        # precompute the stacked boundary matrix for fast classification.
        by_name: dict[str, AffineBoundary] = {}
        for mode in modes:
            for boundary, _ in mode.region.constraints:
                seen = by_name.setdefault(boundary.name, boundary)
                if seen is not boundary and not (
                    np.array_equal(seen.normal, boundary.normal)
                    and seen.offset == boundary.offset
                ):
                    raise ValueError(
                        f"boundary name {boundary.name!r} reused with different coefficients"
                    )
        names = sorted(by_name)
        boundaries = tuple(by_name[n] for n in names)
        object.__setattr__(self, "_boundaries", boundaries)
        index = {n: i for i, n in enumerate(names)}
        n_x = modes[0].region.witness.size
        if boundaries:
            gmat = np.stack([b.normal for b in boundaries])
            goff = np.array([b.offset for b in boundaries])
        else:
            gmat = np.zeros((0, n_x))
            goff = np.zeros(0)
        object.__setattr__(self, "_gmat", gmat)
        object.__setattr__(self, "_goff", goff)
        checks = []
        for mode in modes:
            idx = np.array([index[b.name] for b, _ in mode.region.constraints], dtype=int)
            sgn = np.array([s for _, s in mode.region.constraints], dtype=float)
            checks.append((idx, sgn, mode.region.mode_id))
        object.__setattr__(self, "_region_checks", tuple(checks))

        n_u = lo.size
        for mode in modes:
            dyn = mode.dynamics
            if dyn.is_linear and (dyn.A.shape[0] != n_x or dyn.B.shape[1] != n_u):
                raise ValueError(f"mode {mode.region.mode_id} dynamics shape mismatch")
            if mode.cost.state_weight.shape[0] != n_x or mode.cost.control_weight.shape[0] != n_u:
                raise ValueError(f"mode {mode.region.mode_id} cost shape mismatch")
        object.__setattr__(self, "_n_x", n_x)
        object.__setattr__(self, "_n_u", n_u)

        for mode in modes:
            got = classify(self, mode.region.witness)
            if got != mode.region.mode_id:
                raise ValueError(
                    f"witness of region {mode.region.mode_id} classifies to mode {got}; "
                    "regions with lower ids shadow it"
                )

    @property
    def n_x(self) -> int:
        return self._n_x

    @property
    def n_u(self) -> int:
        return self._n_u

    @property
    def boundaries(self) -> tuple[AffineBoundary, ...]:
        return self._boundaries

    def mode(self, mode_id: int) -> Mode:
        return self.modes[mode_id - 1]

    def clamp(self, u: np.ndarray) -> np.ndarray:
        lo, hi = self.control_bounds
        return np.clip(np.atleast_1d(np.asarray(u, dtype=float)), lo, hi)

    def terminal(self, x: np.ndarray) -> float:
        if self.terminal_cost is None:
            return 0.0
        return float(self.terminal_cost(np.asarray(x, dtype=float)))


def classify(sys: SwitchedSystem, x: np.ndarray) -> int:
    """Active mode id at x: lowest-id region whose closed half-spaces all hold.

    Points on a shared boundary belong to every touching closed region; the
    lowest id wins so the answer is deterministic.  Returns
    ``sys.fallback_mode`` when no region claims x.
    """
    x = np.asarray(x, dtype=float)
    g = sys._gmat @ x + sys._goff
    for idx, sgn, mode_id in sys._region_checks:
        if idx.size == 0 or np.all(sgn * g[idx] >= 0.0):
            return mode_id
    return sys.fallback_mode


def classify_batch(sys: SwitchedSystem, X: np.ndarray) -> np.ndarray:
    """Vectorized `classify` over rows of X, shape (m, n_x) -> (m,) int ids."""
    X = np.asarray(X, dtype=float)
    G = X @ sys._gmat.T + sys._goff
    out = np.full(X.shape[0], sys.fallback_mode, dtype=int)
    free = np.ones(X.shape[0], dtype=bool)
    for idx, sgn, mode_id in sys._region_checks:
        if idx.size == 0:
            hit = free.copy()
        else:
            hit = free & np.all(sgn * G[:, idx] >= 0.0, axis=1)
        out[hit] = mode_id
        free &= ~hit
        if not free.any():
            break
    return out


def boundary_values(sys: SwitchedSystem, x: np.ndarray) -> list[tuple[str, float]]:
    """All boundary functions evaluated at x, ordered by boundary name."""
    x = np.asarray(x, dtype=float)
    g = sys._gmat @ x + sys._goff
    return [(b.name, float(v)) for b, v in zip(sys._boundaries, g)]


def _check_finite(name: str, v: np.ndarray) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} contains non-finite entries: {v!r}")
    return v


def vector_field(sys: SwitchedSystem, x: np.ndarray, u: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Right-hand side with the active region's dynamics; u is clamped first."""
    x = _check_finite("state", x)
    u = _check_finite("control", u)
    u = sys.clamp(u)
    mode = sys.mode(classify(sys, x))
    return np.asarray(mode.dynamics(x, u, t), dtype=float)


def stage_cost(sys: SwitchedSystem, x: np.ndarray, u: np.ndarray) -> float:
    """Running cost of the active region at (x, u)."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return sys.mode(classify(sys, x)).cost.value(x, u)


def stage_cost_batch(sys: SwitchedSystem, X: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Vectorized `stage_cost` over row-aligned states and controls."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    ids = classify_batch(sys, X)
    out = np.empty(X.shape[0])
    for mode in sys.modes:
        sel = ids == mode.region.mode_id
        if not sel.any():
            continue
        c = mode.cost
        xq = np.einsum("ij,jk,ik->i", X[sel], c.state_weight, X[sel])
        uq = np.einsum("ij,jk,ik->i", U[sel], c.control_weight, U[sel])
        out[sel] = c.scale * (xq + uq)
    return out


def classification_radius(sys: SwitchedSystem, x: np.ndarray) -> float:
    """Radius of a ball around x on which `classify` is provably constant.

    Inside the active region the limit is the distance to its own
    boundaries; a lower-id region could also capture a nearby point, so the
    most-violated constraint of each lower-id region bounds the radius too.
    """
    x = np.asarray(x, dtype=float)
    active = classify(sys, x)
    radius = np.inf
    for mode in sys.modes:
        cons = mode.region.constraints
        if mode.region.mode_id == active:
            for b, s in cons:
                radius = min(radius, s * b.value(x) / np.linalg.norm(b.normal))
        elif mode.region.mode_id < active:
            worst = max(
                (-s * b.value(x) / np.linalg.norm(b.normal) for b, s in cons),
                default=-np.inf,
            )
            # worst > 0 because this region did not claim x.
            radius = min(radius, worst)
    return max(radius, 0.0)
