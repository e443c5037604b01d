"""Limited-memory BFGS with the two-loop recursion and Armijo backtracking."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str
    history: list = field(default_factory=list)  # objective after each accepted step


def two_loop(g: np.ndarray, s_list, y_list) -> np.ndarray:
    """Approximate ``H^{-1} g`` from stored curvature pairs (oldest first)."""
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_list), reversed(y_list)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        alphas.append((rho, a))
        q -= a * y
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y), (rho, a) in zip(zip(s_list, y_list), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def minimize(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], x0, memory: int = 10,
             max_iter: int = 1000, gtol: float = 1e-10, ftol: float = 0.0, patience: int = 5, c1: float = 1e-4,
             shrink: float = 0.5, max_backtracks: int = 60) -> LbfgsResult:
    """Minimize ``fun`` (returning value and gradient). Non-finite values count as rejected steps.

    Stops on ``max|g| <= gtol``, or once the relative decrease ``df / |f|`` stays below
    ``ftol`` for ``patience`` consecutive steps.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return LbfgsResult(x, float(f), g, 0, False, "infeasible start")
    s_list, y_list = deque(maxlen=memory), deque(maxlen=memory)
    history = [f]
    stalled = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) <= gtol:
            return LbfgsResult(x, f, g, it - 1, True, "gradient tolerance", history)
        d = -two_loop(g, list(s_list), list(y_list))
        slope = float(g @ d)
        if slope >= 0:  # lost descent; restart from steepest descent
            s_list.clear()
            y_list.clear()
            d = -g
            slope = float(g @ d)
        step = 1.0 if s_list else min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))
        for _ in range(max_backtracks):
            x_new = x + step * d
            f_new, g_new = fun(x_new)
            if np.isfinite(f_new) and np.all(np.isfinite(g_new)) and f_new <= f + c1 * step * slope:
                break
            step *= shrink
        else:
            return LbfgsResult(x, f, g, it - 1, bool(np.max(np.abs(g)) <= max(gtol, 1e-8)),
                               "line search failed", history)
        s, y = x_new - x, g_new - g
        if float(s @ y) > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            s_list.append(s)
            y_list.append(y)
        df = f - f_new
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if f == 0.0:
            return LbfgsResult(x, f, g, it, True, "zero objective", history)
        stalled = stalled + 1 if ftol > 0 and df <= ftol * abs(f) else 0
        if stalled >= patience:
            return LbfgsResult(x, f, g, it, True, "objective tolerance", history)
    return LbfgsResult(x, f, g, max_iter, False, "max iterations", history)
