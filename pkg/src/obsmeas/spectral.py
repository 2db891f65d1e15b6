"""Finite spectral models of diagonal evolution semigroups.

A model is a list of eigenvalues ``0 < lam_1 <= ... <= lam_n`` defining the
generator ``A = -diag(lam)``.  Dissipative models evolve by
``S(t) = diag(exp(-lam_k t))``; unitary models by ``diag(exp(-i lam_k t))``.
States are plain numpy vectors of mode coefficients in the eigenbasis, with
the Euclidean norm.  Observation operators are dense ``p x n`` matrices from
coefficient space to an observation space, with the largest singular value
cached as the operator norm.

The nested invariant subspaces are the spans of the first ``m`` coordinates,
so the decay of the semigroup off each subspace is exactly
``exp(-lam_{m+1} t)`` and the decay-rate parameter ``decay_mu`` equals one
for every diagonal dissipative model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DISSIPATIVE = "dissipative"
UNITARY = "unitary"

#: Default quadrature order for window observation operators.
DEFAULT_QUAD_ORDER = 64


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Diagonal generator with exact semigroup action."""

    eigenvalues: np.ndarray
    kind: str = DISSIPATIVE
    decay_mu: float = 1.0

    def __post_init__(self):
        lam = _frozen(self.eigenvalues)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("eigenvalue list must be a nonempty 1-d sequence")
        if not np.all(lam > 0.0):
            raise ValueError("eigenvalues must be strictly positive")
        if np.any(np.diff(lam) < 0.0):
            raise ValueError("eigenvalues must be nondecreasing")
        if self.kind not in (DISSIPATIVE, UNITARY):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.decay_mu <= 0.0:
            raise ValueError("decay_mu must be positive")
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def mode_count(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def is_unitary(self) -> bool:
        return self.kind == UNITARY

    def propagator(self, t):
        """Diagonal of S(t) as a vector; complex for unitary models."""
        if self.is_unitary:
            return np.exp(-1j * self.eigenvalues * t)
        return np.exp(-self.eigenvalues * t)


@dataclass(frozen=True, eq=False)
class ObservationOperator:
    """Bounded observation matrix with cached operator norm."""

    matrix: np.ndarray
    operator_norm: float = None
    provenance: str = "custom"

    def __post_init__(self):
        mat = _frozen(self.matrix)
        if mat.ndim != 2:
            raise ValueError("observation matrix must be 2-d")
        object.__setattr__(self, "matrix", mat)
        norm = float(np.linalg.norm(mat, 2)) if mat.size else 0.0
        if self.operator_norm is None:
            object.__setattr__(self, "operator_norm", norm)
        else:
            cached = float(self.operator_norm)
            if norm > 0 and abs(cached - norm) > 1e-12 * norm:
                raise ValueError("cached operator norm disagrees with the matrix")
        if self.provenance == "identity":
            n = mat.shape[1]
            if mat.shape[0] != n or not np.array_equal(mat, np.eye(n)):
                raise ValueError("identity provenance requires the identity matrix")

    @property
    def obs_dim(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def mode_dim(self) -> int:
        return int(self.matrix.shape[1])

    @classmethod
    def identity(cls, n: int) -> "ObservationOperator":
        return cls(np.eye(n), 1.0, "identity")


def make_diagonal(eigenvalues, kind: str = DISSIPATIVE) -> SpectralModel:
    """Model from an ascending positive eigenvalue list.

    ``decay_mu`` is one by construction: restricted to modes above the m-th,
    the semigroup contracts at least as fast as ``exp(-lam_{m+1} t)``.
    """
    return SpectralModel(eigenvalues, kind=kind)


def dirichlet_eigenvalues(n: int) -> np.ndarray:
    """First ``n`` eigenvalues (k*pi)**2 of -d^2/dx^2 on (0,1), Dirichlet ends."""
    k = np.arange(1, n + 1, dtype=float)
    return (k * np.pi) ** 2


def make_heat_1d(n: int, window, quad_order: int = DEFAULT_QUAD_ORDER):
    """1-d heat truncation with a windowed internal observation.

    Eigenfunctions are ``e_k(x) = sqrt(2) sin(k pi x)``.  The observation
    matrix rows are ``sqrt(w_q) e_k(x_q)`` over Gauss-Legendre nodes of the
    window ``(a, b)``, so ``norm(B f)**2`` reproduces the window integral of
    ``f**2`` to quadrature accuracy.

    Returns
    -------
    (SpectralModel, ObservationOperator)
    """
    a, b = float(window[0]), float(window[1])
    if n < 1:
        raise ValueError("mode count must be at least 1")
    if not (0.0 <= a < b <= 1.0):
        raise ValueError("window must satisfy 0 <= a < b <= 1")
    if quad_order < 2:
        raise ValueError("quadrature order must be at least 2")
    model = SpectralModel(dirichlet_eigenvalues(n))
    nodes, weights = np.polynomial.legendre.leggauss(quad_order)
    x = 0.5 * (a + b) + 0.5 * (b - a) * nodes
    w = 0.5 * (b - a) * weights
    k = np.arange(1, n + 1)
    basis = np.sqrt(2.0) * np.sin(np.pi * np.outer(x, k))
    mat = np.sqrt(w)[:, None] * basis
    op = ObservationOperator(mat, provenance=f"window({a},{b},{quad_order})")
    return model, op


def _check_state(model: SpectralModel, u0) -> np.ndarray:
    dtype = complex if model.is_unitary else float
    u = np.asarray(u0, dtype=dtype)
    if u.shape != (model.mode_count,):
        raise ValueError(
            f"state length {u.shape} does not match mode count {model.mode_count}"
        )
    return u


def semigroup_apply(model: SpectralModel, t: float, u0) -> np.ndarray:
    """u(t) = S(t) u0, componentwise exact."""
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    return model.propagator(t) * _check_state(model, u0)


def state_derivative(model: SpectralModel, t: float, u0, order: int = 1) -> np.ndarray:
    """Exact m-th time derivative of the trajectory at time t.

    Coefficients are ``(-lam_k)**m exp(-lam_k t) u0_k`` (with ``-i lam_k``
    for unitary models).  ``order >= 1`` requires ``t > 0``, mirroring the
    analytic-semigroup contract even though finite models are smooth at 0.
    """
    if order < 0:
        raise ValueError("derivative order must be nonnegative")
    if order == 0:
        return semigroup_apply(model, t, u0)
    if t <= 0.0:
        raise ValueError("positive time required for derivatives of order >= 1")
    u = _check_state(model, u0)
    rate = -1j * model.eigenvalues if model.is_unitary else -model.eigenvalues
    return rate**order * model.propagator(t) * u


def observation_intensity(model: SpectralModel, op: ObservationOperator, t: float, u0) -> float:
    """Squared observation norm ``g(t) = norm(B S(t) u0)**2``."""
    if op.mode_dim != model.mode_count:
        raise ValueError("observation operator and model dimensions disagree")
    v = op.matrix @ semigroup_apply(model, t, u0)
    return float(np.vdot(v, v).real)


def model_to_descriptor(model: SpectralModel, op: ObservationOperator = None) -> dict:
    """JSON-ready descriptor; window models round-trip through provenance."""
    desc = {
        "kind": "diagonal",
        "n": model.mode_count,
        "generator": model.kind,
        "eigenvalues": [float(x) for x in model.eigenvalues],
    }
    if op is not None and op.provenance.startswith("window("):
        inner = op.provenance[len("window(") : -1].split(",")
        desc = {
            "kind": "heat1d",
            "n": model.mode_count,
            "generator": model.kind,
            "window": [float(inner[0]), float(inner[1])],
            "quad_order": int(inner[2]),
        }
    return desc


def model_from_descriptor(desc: dict):
    """Build ``(model, observation operator)`` from a descriptor mapping.

    Diagonal descriptors get the identity observation; ``heat1d`` builds the
    window operator.  Unknown kinds and a unitary heat generator are
    rejected.
    """
    kind = desc.get("kind")
    generator = desc.get("generator", DISSIPATIVE)
    if kind == "heat1d":
        if generator != DISSIPATIVE:
            raise ValueError("heat1d descriptors must use the dissipative generator")
        window = desc.get("window", [0.0, 1.0])
        return make_heat_1d(int(desc["n"]), window, int(desc.get("quad_order", DEFAULT_QUAD_ORDER)))
    if kind == "diagonal":
        eigs = desc.get("eigenvalues")
        if eigs is None:
            raise ValueError("diagonal descriptors require an eigenvalue list")
        model = SpectralModel(eigs, kind=generator)
        return model, ObservationOperator.identity(model.mode_count)
    raise ValueError(f"unknown model kind {kind!r}")
