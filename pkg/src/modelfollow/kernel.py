"""Quadratic value-function algebra for the model-following learner.

The critic works on the augmented vector ``z = [E; mu]`` where ``E`` stacks
the current and ``r`` past output errors and ``mu`` is the correction
control. The value estimate ``0.5 * z' Theta z`` is stored in packed form:
a vector over the upper-triangular index pairs ``(i, j), j >= i``, ordered
row-major, so that ``dot(pack_kernel(Theta), kron_pack_state(z))`` equals
the quadratic form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

FloatArray = NDArray[np.float64]

_SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class Dimensions:
    """Problem sizes.

    Attributes:
        p: number of outputs.
        t: number of inputs.
        r: number of extra past error samples; the stack holds ``r + 1``.
    """

    p: int = 1
    t: int = 1
    r: int = 2

    def __post_init__(self) -> None:
        if self.p < 1 or self.t < 1 or self.r < 0:
            raise ValueError(f"need p >= 1, t >= 1, r >= 0; got {self}")

    @property
    def n_E(self) -> int:
        return (self.r + 1) * self.p

    @property
    def n_Z(self) -> int:
        return self.n_E + self.t

    @property
    def q(self) -> int:
        return self.n_Z * (self.n_Z + 1) // 2


def packed_length(n: int) -> int:
    return n * (n + 1) // 2


def _side_from_packed(q: int) -> int:
    n = int(round((np.sqrt(8 * q + 1) - 1) / 2))
    if packed_length(n) != q:
        raise ValueError(f"length {q} is not a triangular number")
    return n


@dataclass(frozen=True)
class ErrorStack:
    """Stacked model-following errors ``[eps_k; eps_{k-1}; ...; eps_{k-r}]``."""

    entries: FloatArray
    p: int = 1

    @classmethod
    def zeros(cls, dims: Dimensions) -> ErrorStack:
        return cls(np.zeros(dims.n_E), dims.p)

    def shift(self, eps: ArrayLike) -> ErrorStack:
        """Return a new stack with ``eps`` in front and the oldest block dropped."""
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        if eps.shape != (self.p,):
            raise ValueError(f"error sample must have length {self.p}, got {eps.shape}")
        return ErrorStack(np.concatenate([eps, self.entries[: -self.p]]), self.p)

    @property
    def newest(self) -> FloatArray:
        return self.entries[: self.p]

    def __len__(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class CostWeights:
    """Weights of the stage cost ``0.5 * (E' Q E + mu' R mu)``."""

    Q: FloatArray
    R: FloatArray

    def __post_init__(self) -> None:
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise ValueError("Q and R must be square")
        if not (np.allclose(Q, Q.T) and np.allclose(R, R.T)):
            raise ValueError("Q and R must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive definite")

    @classmethod
    def scaled_identity(cls, dims: Dimensions, q: float, r: float) -> CostWeights:
        return cls(q * np.eye(dims.n_E), r * np.eye(dims.t))


def stage_cost(E: ArrayLike, mu: ArrayLike, w: CostWeights) -> float:
    """Quadratic stage cost ``0.5 * (E' Q E + mu' R mu)``."""
    E = np.atleast_1d(np.asarray(E, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if E.shape != (w.Q.shape[0],) or mu.shape != (w.R.shape[0],):
        raise ValueError(
            f"dimension mismatch: E {E.shape}, mu {mu.shape} vs Q {w.Q.shape}, R {w.R.shape}"
        )
    return 0.5 * float(E @ w.Q @ E + mu @ w.R @ mu)


def augment(E: ArrayLike, mu: ArrayLike) -> FloatArray:
    """The augmented vector ``[E; mu]``."""
    return np.concatenate([np.atleast_1d(np.asarray(E, float)), np.atleast_1d(np.asarray(mu, float))])


def kron_pack_state(z: ArrayLike) -> FloatArray:
    """Upper-triangular products ``z_i * z_j`` (``j >= i``), row-major."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.ndim != 1:
        raise ValueError("z must be a vector")
    i, j = np.triu_indices(z.shape[0])
    return z[i] * z[j]


@dataclass(frozen=True)
class QuadraticKernel:
    """Symmetric critic matrix with its ``(E, mu)`` block partition."""

    theta: FloatArray
    n_E: int

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "theta", theta)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise ValueError("theta must be square")
        if not 0 < self.n_E < theta.shape[0]:
            raise ValueError(f"n_E={self.n_E} incompatible with theta of size {theta.shape[0]}")
        if not _is_symmetric(theta):
            raise ValueError("theta must be symmetric")

    @classmethod
    def from_packed(cls, v: ArrayLike, n_E: int) -> QuadraticKernel:
        return cls(unpack_kernel(v), n_E)

    def packed(self) -> FloatArray:
        return pack_kernel(self.theta)

    @property
    def ee(self) -> FloatArray:
        return self.theta[: self.n_E, : self.n_E]

    @property
    def em(self) -> FloatArray:
        return self.theta[: self.n_E, self.n_E :]

    @property
    def me(self) -> FloatArray:
        return self.theta[self.n_E :, : self.n_E]

    @property
    def mm(self) -> FloatArray:
        return self.theta[self.n_E :, self.n_E :]


def _is_symmetric(m: FloatArray) -> bool:
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    return bool(np.max(np.abs(m - m.T), initial=0.0) <= _SYMMETRY_TOL * scale)


def pack_kernel(theta: ArrayLike | QuadraticKernel) -> FloatArray:
    """Pack a symmetric matrix so that ``pack(T) . kron_pack_state(z) == 0.5 z'Tz``.

    Diagonal pairs carry ``T_ii / 2``; off-diagonal pairs carry ``T_ij``, which
    folds the symmetric twin and the one-half together.
    """
    T = theta.theta if isinstance(theta, QuadraticKernel) else np.asarray(theta, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ValueError("kernel must be square")
    if not _is_symmetric(T):
        raise ValueError("kernel must be symmetric")
    i, j = np.triu_indices(T.shape[0])
    return np.where(i == j, 0.5, 1.0) * T[i, j]


def unpack_kernel(v: ArrayLike) -> FloatArray:
    """Inverse of :func:`pack_kernel`; returns the symmetric matrix."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError("packed kernel must be a vector")
    n = _side_from_packed(v.shape[0])
    i, j = np.triu_indices(n)
    T = np.zeros((n, n))
    T[i, j] = v
    T[j, i] = v
    T[np.diag_indices(n)] *= 2.0
    return T


def evaluate_value(v: ArrayLike, z: ArrayLike) -> float:
    """Critic value ``v . kron_pack_state(z)``."""
    v = np.asarray(v, dtype=float)
    zbar = kron_pack_state(z)
    if v.shape != zbar.shape:
        raise ValueError(f"packed weights of length {v.shape} do not match state of size {np.size(z)}")
    return float(v @ zbar)
