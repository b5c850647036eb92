"""Smallest achievable post-convergence Bellman residual for a frozen Case 1 strategy.

For a fixed strategy the residual on step k is ``theta . z_tilde_k - U_k``.
The best any quadratic critic can do, in the worst case over the window, is
the Chebyshev solution of that overdetermined system. It is solved here as
a linear program and reported relative to the mean stage cost, the scale
used by the acceptance check. Needs scipy (``pip install .[diagnostics]``).
"""

from __future__ import annotations

import argparse

import numpy as np
from scipy.optimize import linprog

from modelfollow.experiment import load_config, run_experiment
from modelfollow.kernel import augment, kron_pack_state, stage_cost
from modelfollow.plants import DelayedLinearPlant, LinearReferenceModel


def frozen_window(omega, cost, start: int, steps: int, r: int = 2):
    """Regressors and targets along a closed loop driven by constant gains."""
    plant, ref = DelayedLinearPlant.case1(), LinearReferenceModel.case1()
    omega = np.atleast_2d(omega)
    E = np.zeros(r + 1)
    E[0] = (ref.y - plant.y)[0]
    u = np.zeros(1)
    Z, U = [], []
    for k in range(steps):
        mu = omega @ E
        u = u + mu
        y = plant.step(u)
        ym = ref.step()
        E_next = np.r_[ym - y, E[:-1]]
        if k >= start:
            Z.append(kron_pack_state(augment(E, mu)) - kron_pack_state(augment(E_next, omega @ E_next)))
            U.append(stage_cost(E, mu, cost))
        E = E_next
    return np.array(Z), np.array(U)


def chebyshev_floor(Z: np.ndarray, U: np.ndarray) -> float:
    """``min_theta max_k |Z_k theta - U_k| / mean(U)``."""
    scale = 1.0 / np.mean(U)
    Zs, Us = Z * scale, U * scale
    n, q = Zs.shape
    ones = np.ones((n, 1))
    A_ub = np.block([[Zs, -ones], [-Zs, -ones]])
    b_ub = np.r_[Us, -Us]
    res = linprog(np.r_[np.zeros(q), 1.0], A_ub=A_ub, b_ub=b_ub,
                  bounds=[(None, None)] * q + [(0, None)], method="highs")
    if res.status != 0:
        raise RuntimeError(res.message)
    return float(res.x[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/case1.yaml")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = load_config(args.config, seed=args.seed)
    m = run_experiment(cfg, write=False)
    print(f"learned gains {np.round(m.converged_gains, 4)} converged at step {m.convergence_step}")
    print(f"  achieved max|residual| / mean cost = "
          f"{m.max_bellman_residual_post_convergence / m.mean_stage_cost_post_convergence:.4g}")
    start = (m.convergence_step or 0) + 1
    for label, gains in (("learned", m.converged_gains), ("literature", [4.0168, -0.2670, -2.7488])):
        Z, U = frozen_window(np.array(gains), cfg.cost, start, cfg.n_steps)
        print(f"{label:>9} gains: best possible max|residual| / mean cost = {chebyshev_floor(Z, U):.4g}"
              f" (acceptance threshold 0.05)")


if __name__ == "__main__":
    main()
