"""Benchmark processes, reference models and probing noise.

Every plant exposes ``y`` (current output), ``k`` (step index) and
``step(u) -> y_next``. References expose ``y`` and ``step() -> y_next``.
All objects are single-owner sequential state machines; use
:func:`copy.deepcopy` to fork one.
"""

from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

# --- Case 1: delayed linear AUV model, sampled at T_s = 0.01 s -------------
CASE1_A = np.array([[0.9817, -0.0119, 0.0], [0.0099, 0.9999, 0.0], [0.0, -0.01, 1.0]])
CASE1_A_D = np.array([[0.0099, 0.005, 0.005], [0.0, -0.001, -0.0005], [-0.001, -0.0005, 0.001]])
CASE1_B = np.array([[-0.0131], [-0.0001], [0.0]])
CASE1_B_H = np.array([[0.001], [0.0001], [0.0001]])
CASE1_C = np.array([[-0.8784, -2.3961, 0.6464]])
CASE1_X0 = np.array([-0.2956, -0.7210, -1.7932])
CASE1_D = 10
CASE1_H = 20
CASE1_TS = 0.01

CASE1_A_M = np.array([[1.0, 0.01], [-0.01, 1.0]])
CASE1_C_M = np.array([[1.0, 0.0]])
CASE1_XM0 = np.array([0.0, 1.0])


def round_half_away(v: float) -> int:
    """Round to nearest integer, ties away from zero (2.5 -> 3, -2.5 -> -3)."""
    return int(math.copysign(math.floor(abs(v) + 0.5), v))


def _finite_input(u: ArrayLike, size: int) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float)).reshape(-1)
    if u.shape != (size,):
        raise ValueError(f"input must have length {size}, got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise FloatingPointError(f"non-finite plant input {u}")
    return u


class DelayedLinearPlant:
    """``x+ = A x + B u + A_d x_{k-d} + B_h u_{k-h}``, ``y = C x``.

    Pre-history states and inputs are zero.
    """

    def __init__(self, A, A_d, B, B_h, C, d: int, h: int, x0=None, T_s: float = 1.0):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.A_d = np.atleast_2d(np.asarray(A_d, dtype=float))
        n = self.A.shape[0]
        self.B = np.asarray(B, dtype=float).reshape(n, -1)
        self.B_h = np.asarray(B_h, dtype=float).reshape(n, -1)
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        if d < 0 or h < 0:
            raise ValueError("delays must be nonnegative")
        self.d = int(d)
        self.h = int(h)
        self.T_s = float(T_s)
        self.x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
        m = self.B.shape[1]
        self.x_hist: deque[np.ndarray] = deque([np.zeros(n) for _ in range(self.d)], maxlen=self.d or None)
        self.u_hist: deque[np.ndarray] = deque([np.zeros(m) for _ in range(self.h)], maxlen=self.h or None)
        self.k = 0

    @classmethod
    def case1(cls, x0=CASE1_X0) -> DelayedLinearPlant:
        return cls(CASE1_A, CASE1_A_D, CASE1_B, CASE1_B_H, CASE1_C, CASE1_D, CASE1_H, x0, CASE1_TS)

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def y(self) -> np.ndarray:
        return self.C @ self.x

    @property
    def time(self) -> float:
        return self.k * self.T_s

    def step(self, u) -> np.ndarray:
        u = _finite_input(u, self.n_inputs)
        x_delayed = self.x_hist[0] if self.d else self.x
        u_delayed = self.u_hist[0] if self.h else u
        x_next = self.A @ self.x + self.B @ u + self.A_d @ x_delayed + self.B_h @ u_delayed
        if self.d:
            self.x_hist.append(self.x.copy())
        if self.h:
            self.u_hist.append(u.copy())
        self.x = x_next
        self.k += 1
        return self.y


class LinearReferenceModel:
    """Autonomous reference ``x_m+ = A_m x_m``, ``y_m = C_m x_m``."""

    def __init__(self, A_m, C_m, x_m0):
        self.A_m = np.atleast_2d(np.asarray(A_m, dtype=float))
        self.C_m = np.atleast_2d(np.asarray(C_m, dtype=float))
        self.x_m = np.asarray(x_m0, dtype=float).copy()
        self.k = 0

    @classmethod
    def case1(cls, x_m0=CASE1_XM0) -> LinearReferenceModel:
        return cls(CASE1_A_M, CASE1_C_M, x_m0)

    @property
    def y(self) -> np.ndarray:
        return self.C_m @ self.x_m

    def step(self) -> np.ndarray:
        self.x_m = self.A_m @ self.x_m
        self.k += 1
        return self.y


class NonlinearSwitchingPlant:
    """Two-regime SISO process.

    For ``k <= N_T/2``: ``y+ = y/(1+y^2) + u^3``. After that::

        y+ = (y_k y_{k-1} y_{k-2} u_{k-1} (y_{k-2} - 1) + round(2k/N_T) u_k)
             / (1 + y_{k-1}^2 + y_{k-2}^2)
    """

    def __init__(self, N_T: int = 4000):
        self.N_T = int(N_T)
        self.y_hist = [0.0, 0.0, 0.0]  # y_k, y_{k-1}, y_{k-2}
        self.u_hist = [0.0, 0.0]  # u_k, u_{k-1} once step() has run
        self.k = 0

    @property
    def n_inputs(self) -> int:
        return 1

    @property
    def y(self) -> np.ndarray:
        return np.array([self.y_hist[0]])

    @property
    def time(self) -> float:
        return float(self.k)

    def regime(self, k: int | None = None) -> int:
        k = self.k if k is None else k
        return 1 if k <= self.N_T / 2 else 2

    def step(self, u) -> np.ndarray:
        u = float(_finite_input(u, 1)[0])
        y0, y1, y2 = self.y_hist
        if self.regime() == 1:
            y_next = y0 / (1.0 + y0 * y0) + u**3
        else:
            u_prev = self.u_hist[0]
            gain = round_half_away(2 * self.k / self.N_T)
            y_next = (y0 * y1 * y2 * u_prev * (y2 - 1.0) + gain * u) / (1.0 + y1 * y1 + y2 * y2)
        self.y_hist = [y_next, y0, y1]
        self.u_hist = [u, self.u_hist[0]]
        self.k += 1
        return self.y


def piecewise_reference(k: int, N_T: int) -> float:
    """Value of ``y_m[k+1]`` for the four-phase Case 2 reference."""
    s = round_half_away(2 * k / N_T)
    if k <= N_T / 5 or 2 * N_T / 5 < k <= 4 * N_T / 5:
        return 0.5 * math.sin(k * math.pi / 100) + 0.3 * math.cos(k * math.pi / 50)
    if k <= 2 * N_T / 5:
        return 0.5 * (-1) ** s
    return -0.4 * (-1) ** s


class PiecewiseReference:
    """Stateful wrapper around :func:`piecewise_reference`.

    ``y`` at index 0 is taken as the first branch evaluated at ``k = 0``.
    """

    def __init__(self, N_T: int = 4000):
        self.N_T = int(N_T)
        self.k = 0
        self._y = piecewise_reference(0, self.N_T)

    @property
    def y(self) -> np.ndarray:
        return np.array([self._y])

    def step(self) -> np.ndarray:
        self._y = piecewise_reference(self.k, self.N_T)
        self.k += 1
        return self.y


class FreeResponseReference:
    """Reference equal to a private copy of a plant driven with zero input."""

    def __init__(self, plant):
        self._plant = copy.deepcopy(plant)
        self.k = 0

    @property
    def y(self) -> np.ndarray:
        return self._plant.y

    def step(self) -> np.ndarray:
        self.k += 1
        return self._plant.step(np.zeros(self._plant.n_inputs))


@dataclass
class ProbingNoise:
    """Exploration signal added to the correction control.

    ``uniform`` draws i.i.d. samples in ``[-amplitude, amplitude]``;
    ``multisine`` sums three sinusoids at incommensurate frequencies with
    seeded phases, scaled so the magnitude never exceeds ``amplitude``.
    """

    kind: str = "uniform"
    amplitude: float = 0.1
    active_steps: int = 250
    seed: int = 0
    size: int = 1

    FREQS = np.array([0.7, 1.9 * math.sqrt(2), 3.1 * math.sqrt(3)])

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "multisine"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.amplitude < 0 or self.active_steps < 0:
            raise ValueError("amplitude and active_steps must be nonnegative")
        self._phases = np.random.default_rng(self.seed).uniform(0.0, 2 * math.pi, (self.size, 3))

    def sample(self, k: int) -> np.ndarray:
        """Noise at step ``k``; depends only on ``(seed, k)``."""
        if k >= self.active_steps or self.amplitude == 0:
            return np.zeros(self.size)
        if self.kind == "multisine":
            return self.amplitude / 3.0 * np.sin(self.FREQS * k + self._phases).sum(axis=1)
        return np.random.default_rng([self.seed, k]).uniform(-self.amplitude, self.amplitude, self.size)
