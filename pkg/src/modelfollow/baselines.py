"""Comparison controllers: sliding-mode model following and high-order MFAC.

The sliding-mode controller is model based and reads the true plant and
reference-model states. The MFAC controller only sees outputs.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .plants import CASE1_A, CASE1_A_D, CASE1_B, CASE1_B_H, CASE1_D, CASE1_H

SMC_G = np.array([[-0.1785, 0.0292], [-0.3275, -0.0152], [0.0905, -0.0326]])
SMC_H = np.array([[0.9999, -0.0100]])
SMC_S_F = np.array([1.0, 1.85, -0.825])
SMC_K = np.array([145.9573, 270.1303, -120.8601])
SMC_K_TAU0 = np.array([-75.6846, -140.0165, 62.4398])
SMC_K_R = 75.6846
SMC_K_E = 75.6846
SMC_K_SIGMA = 37.8423
SMC_REACHING_RATE = 0.1

MFAC_BETA = np.array([1 / 2, 1 / 4, 1 / 8, 1 / 16, 1 / 32, 1 / 32])
MFAC_BETA_BAR = np.array([1 / 2, 1 / 4, 1 / 8, 1 / 8])
MFAC_PHI0 = 0.5


class SlidingModeController:
    """Discrete sliding-mode model follower for the delayed linear plant.

    ``sigma_mode`` selects the last term of the reaching-law accumulator
    ``R_k = R_{k-1} + sigma_k - 0.5 * x_{k-1}``: ``"sigma"`` uses
    ``x = sigma`` and ``"zero"`` drops the term.
    """

    def __init__(self, A=CASE1_A, A_d=CASE1_A_D, B=CASE1_B, B_h=CASE1_B_H, d: int = CASE1_D,
                 h: int = CASE1_H, G=SMC_G, H=SMC_H, S_f=SMC_S_F, K=SMC_K, sigma_mode: str = "sigma"):
        if sigma_mode not in ("sigma", "zero"):
            raise ValueError(f"unknown sigma_mode {sigma_mode!r}")
        self.A = np.asarray(A, float)
        self.A_d = np.asarray(A_d, float)
        self.B = np.asarray(B, float).reshape(-1)
        self.B_h = np.asarray(B_h, float).reshape(-1)
        self.G = np.asarray(G, float)
        self.H = np.asarray(H, float).reshape(-1)
        self.S_f = np.asarray(S_f, float)
        self.K = np.asarray(K, float)
        self.sigma_mode = sigma_mode
        self.lag_d = d + 1
        self.lag_h = h + 1
        n = self.A.shape[0]
        # tau_hist[0] is tau_{k-1}
        span = max(self.lag_h, self.lag_d)
        self.tau_hist: deque[np.ndarray] = deque([np.zeros(n)] * span, maxlen=span)
        self.E_int = 0.0
        self.R_acc = 0.0
        self.sigma_prev = 0.0
        self.tau_0: np.ndarray | None = None
        self.k = 0

    def accumulator_increment(self, tau_prev, tau_d, tau_h) -> float:
        """``S_f (A + B K) tau_{k-1} + S_f A_d tau_{k-d-1} + S_f B_h K tau_{k-h-1}``.

        The input-delay term carries ``K`` so that the scalar ``S_f B_h``
        multiplies the delayed feedback input rather than a state vector.
        """
        closed = self.A + np.outer(self.B, self.K)
        return float(self.S_f @ closed @ tau_prev + self.S_f @ self.A_d @ tau_d
                     + (self.S_f @ self.B_h) * (self.K @ tau_h))

    def control(self, x, x_m) -> float:
        x = np.asarray(x, float).reshape(-1)
        x_m = np.asarray(x_m, float).reshape(-1)
        k = self.k
        tau = x - self.G @ x_m
        if self.tau_0 is None:
            self.tau_0 = tau.copy()
        hist = self.tau_hist
        self.E_int += self.accumulator_increment(hist[0], hist[self.lag_d - 1], hist[self.lag_h - 1])
        decay = np.exp(-SMC_REACHING_RATE * k)
        sigma = float(self.S_f @ tau - decay * (self.S_f @ self.tau_0) - self.E_int)
        self.R_acc += sigma - (0.5 * self.sigma_prev if self.sigma_mode == "sigma" else 0.0)
        u = (self.H @ x_m + self.K @ tau
             + np.exp(-SMC_REACHING_RATE * (k + 1)) * (SMC_K_TAU0 @ self.tau_0)
             + SMC_K_R * self.R_acc - SMC_K_E * self.E_int - SMC_K_SIGMA * sigma)
        self.sigma_prev = sigma
        hist.appendleft(tau)
        self.k += 1
        return float(u)


class HighOrderMFAC:
    """Improved high-order model-free adaptive controller (SISO).

    Pre-history: every past pseudo-gradient estimate equals ``phi0``; past
    inputs and outputs are zero.
    """

    def __init__(self, beta=MFAC_BETA, beta_bar=MFAC_BETA_BAR, phi0: float = MFAC_PHI0,
                 step_phi: float = 0.8, mu_phi: float = 0.01, step_u: float = 0.8, lam: float = 0.1):
        self.beta = np.asarray(beta, float)
        self.beta_bar = np.asarray(beta_bar, float)
        self.step_phi = step_phi
        self.mu_phi = mu_phi
        self.step_u = step_u
        self.lam = lam
        self.phi_hist = deque([phi0] * len(self.beta), maxlen=len(self.beta))  # phi_{k-1}, ..., phi_{k-6}
        self.u_hist = deque([0.0] * len(self.beta_bar), maxlen=len(self.beta_bar))  # u_{k-1}, ..., u_{k-4}
        self.y_prev = 0.0
        self.k = 0

    def estimate(self, y: float) -> float:
        phi_mix = float(self.beta @ np.array(self.phi_hist))
        du = self.u_hist[0] - self.u_hist[1]
        dy = y - self.y_prev
        return phi_mix + self.step_phi * du / (self.mu_phi + du * du) * (dy - du * phi_mix)

    def control(self, y: float, y_m: float) -> float:
        y = float(np.asarray(y).reshape(-1)[0])
        y_m = float(np.asarray(y_m).reshape(-1)[0])
        phi = self.estimate(y)
        den = self.lam + phi * phi
        u = (phi * phi / den * self.u_hist[0]
             + self.lam / den * float(self.beta_bar @ np.array(self.u_hist))
             + self.step_u * phi * (y_m - y) / den)
        self.phi_hist.appendleft(phi)
        self.u_hist.appendleft(u)
        self.y_prev = y
        self.k += 1
        return u
