"""Dormand-Prince 5(4) integrator with a PI step-size controller."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Dormand & Prince (1980), FSAL form
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


class StepSizeUnderflow(RuntimeError):
    pass


@dataclass
class Solution:
    t: np.ndarray
    y: np.ndarray
    steps: int
    rejected: int
    max_error: float
    status: str


def dopri5(fun, t0, y0, t_max, *, rtol=1e-10, atol=1e-300, scale=None, stop=None, on_step=None,
           first_step=None, max_steps=200_000, beta=0.04):
    """Integrate ``y' = fun(t, y)`` from ``t0`` towards ``t_max``.

    ``scale(y_old, y_new)`` may return a per-component error scale; the
    default is ``atol + rtol * max(|y_old|, |y_new|)``.  Integration ends
    when ``stop(t, y)`` is true after an accepted step, or at ``t_max``.
    ``on_step(t, y)`` runs after every accepted step and may raise.
    """
    y = np.asarray(y0, dtype=float).copy()
    t = float(t0)
    n = y.size
    k = np.empty((7, n))
    k[0] = fun(t, y)
    ts, ys = [t], [y.copy()]
    if first_step is None:
        d0 = np.linalg.norm(y) + 1e-300
        d1 = np.linalg.norm(k[0]) + 1e-300
        first_step = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
        first_step = min(first_step, t_max - t)
    step = first_step
    err_old = 1e-4
    expo = 0.2 - 0.75 * beta
    rejected = 0
    max_err = 0.0
    status = "t_max"
    for count in range(max_steps):
        if t >= t_max:
            break
        step = min(step, t_max - t)
        for s in range(1, 7):
            yt = y + step * (np.asarray(_A[s]) @ k[:s])
            k[s] = fun(t + _C[s] * step, yt)
        y_new = yt  # stage 7 is evaluated at the 5th-order solution (FSAL)
        err_vec = step * (_E @ k)
        if scale is None:
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        else:
            sc = scale(y, y_new)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(sc > 0, err_vec / sc, 0.0)
        err = float(np.sqrt(np.mean(ratio * ratio)))
        if err <= 1.0:
            t += step
            y = y_new
            k[0] = k[6]
            ts.append(t)
            ys.append(y.copy())
            max_err = max(max_err, err)
            fac = 10.0 if err == 0.0 else min(10.0, max(0.2, 0.9 * err ** -expo * err_old ** beta))
            err_old = max(err, 1e-4)
            step *= fac
            if on_step is not None:
                on_step(t, y)
            if stop is not None and stop(t, y):
                status = "stopped"
                break
        else:
            rejected += 1
            step *= max(0.2, 0.9 * err ** -0.2)
        if step <= 1e-14 * max(1.0, abs(t)):
            raise StepSizeUnderflow(f"step size underflow at t={t:.6g}")
    else:
        status = "max_steps"
    return Solution(np.array(ts), np.array(ys), count + 1, rejected, max_err, status)
