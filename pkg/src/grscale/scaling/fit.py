"""Huber-loss scaling-law fitting with multistart L-BFGS over bounded reparameterizations."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from .equations import FORMS, POSITIVE, SIZE_NAMES, ScalingError, evaluate
from .lbfgs import minimize

RESIDUAL_FORMS = ("log-log", "log-linear")  # log R_hat - log R, or log R_hat - R


@dataclass(frozen=True)
class ScalingPoint:
    sizes: dict
    recall: float
    k: int = 5

    def __post_init__(self):
        for name, v in self.sizes.items():
            if name not in SIZE_NAMES:
                raise ScalingError(f"unknown size name {name!r}")
            if not v > 0:
                raise ScalingError(f"size {name} must be positive, got {v}")


@dataclass(frozen=True)
class FitOptions:
    residual_form: str = "log-log"
    multistart: int = 32
    seed: int = 0
    max_iter: int = 2000
    tolerance: float = 1e-12
    ftol: float = 1e-10
    sigma: float = 0.03
    fixed: tuple = ()  # ((name, value), ...)
    screen_iter: int = 100  # every start runs this many iterations ...
    polish: int = 4  # ... then the best few continue to max_iter

    def __post_init__(self):
        if self.residual_form not in RESIDUAL_FORMS:
            raise ScalingError(f"residual_form must be one of {RESIDUAL_FORMS}")
        if self.multistart < 1:
            raise ScalingError("multistart must be >= 1")


@dataclass
class FitResult:
    form: str
    params: dict
    objective: float
    r_square: float
    converged: bool
    iterations: int
    residuals: list = field(default_factory=list)
    start_index: int = 0
    residual_form: str = "log-log"
    fixed: dict = field(default_factory=dict)

    def to_json(self) -> str:
        obj = {
            "form": self.form,
            "params": {k: self.params[k] for k in sorted(self.params)},
            "fixed": {k: self.fixed[k] for k in sorted(self.fixed)},
            "objective": self.objective,
            "r_square": self.r_square,
            "converged": self.converged,
            "iterations": self.iterations,
            "start_index": self.start_index,
            "residual_form": self.residual_form,
            "residuals": self.residuals,
        }
        return json.dumps(obj, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        d = json.loads(text)
        return cls(d["form"], d["params"], d["objective"], d["r_square"], d["converged"], d["iterations"],
                   d["residuals"], d["start_index"], d["residual_form"], d.get("fixed", {}))

    def predict(self, sizes: dict):
        from .equations import eval_eq
        return eval_eq(self.form, self.params, sizes)


def r_square(preds, obs) -> float:
    preds, obs = np.asarray(preds, dtype=np.float64), np.asarray(obs, dtype=np.float64)
    ss_res = float(np.sum((obs - preds) ** 2))
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else float("-inf")
    return 1.0 - ss_res / ss_tot


def _sizes_of(form, points):
    names = FORMS[form][1]
    out = {}
    for n in names:
        try:
            out[n] = np.array([p.sizes[n] for p in points], dtype=np.float64)
        except KeyError:
            raise ScalingError(f"{form} needs size {n!r} on every point") from None
    return out


def _to_free(name, value):
    if name in POSITIVE:
        return math.log(value)
    return math.log(value / (1.0 - value))


def _from_free(name, z):
    if name in POSITIVE:
        return ad.exp(z) if isinstance(z, Tensor) else math.exp(z)
    return ad.sigmoid(z) if isinstance(z, Tensor) else 1.0 / (1.0 + math.exp(-z))


class _Objective:
    def __init__(self, form, sizes, obs, opts: FitOptions, free: list, fixed: dict):
        self.form, self.sizes, self.obs, self.opts = form, sizes, obs, opts
        self.free, self.fixed = free, fixed
        self.target = np.log(obs) if opts.residual_form == "log-log" else obs

    def params(self, theta):
        p = dict(self.fixed)
        for i, name in enumerate(self.free):
            p[name] = _from_free(name, theta[i])
        return p

    def __call__(self, x: np.ndarray):
        with ad.precision(np.float64), np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            theta = Tensor(x, requires_grad=True, dtype=np.float64)
            pred = evaluate(self.form, self.params(theta), self.sizes)
            if not isinstance(pred, Tensor) or np.any(~(pred.data > 0)):
                return math.inf, np.full_like(x, np.nan)
            loss = ad.sum_(ad.huber(ad.log(pred) - self.target, self.opts.sigma))
            grads = ad.backward(loss, leaves=[theta])
            return float(loss.item()), np.array(grads[theta], dtype=np.float64)


def _start_grid(form, free, obs, opts: FitOptions):
    """Deterministic log-uniform starting points; the first is a fixed central guess."""
    rng = np.random.Generator(np.random.Philox(key=opts.seed))
    top = float(np.max(obs))
    centre = {"E": max(float(np.min(obs)) * 0.5, 1e-6), "A": 1.0, "B": 1.0, "a": 0.3, "b": 0.3,
              "R0": min(top + 0.5 * (1 - top), 0.999) if form != "eq8" else 0.5,
              "gamma": 0.05, "beta": 0.05, "gamma1": 0.05, "gamma2": 0.05}
    starts = []
    for s in range(opts.multistart):
        p = {}
        for name in free:
            if s == 0:
                p[name] = centre[name]
            elif name == "R0":
                p[name] = min(top + rng.uniform(0.0, 1.0) * (1 - top), 0.999)
            elif name == "E":
                p[name] = float(np.min(obs)) * rng.uniform(0.05, 0.95)
            elif name in ("A", "B"):
                p[name] = 10 ** rng.uniform(-3, 3)
            elif name in ("a", "b"):
                p[name] = 10 ** rng.uniform(-1.5, 0.3)
            else:
                p[name] = 10 ** rng.uniform(-3, -0.3)
        starts.append(p)
    return starts


def fit(form: str, points, options: FitOptions = FitOptions(), **overrides) -> FitResult:
    """Minimize the summed Huber residual over the free parameters of ``form``.

    ``fixed`` (in options or as a keyword dict) pins parameters, e.g. ``{"beta": 0.0}``.
    """
    if "fixed" in overrides and isinstance(overrides["fixed"], dict):
        overrides["fixed"] = tuple(sorted(overrides["fixed"].items()))
    if overrides:
        from dataclasses import replace
        options = replace(options, **overrides)
    if form not in FORMS:
        raise ScalingError(f"unknown form {form!r}")
    points = list(points)
    fixed = {k: float(v) for k, v in options.fixed}
    names = FORMS[form][0]
    unknown = set(fixed) - set(names)
    if unknown:
        raise ScalingError(f"{form} has no parameters {sorted(unknown)}")
    free = [n for n in names if n not in fixed]
    if len(points) < len(free):
        raise ScalingError(f"{len(points)} points for {len(free)} free parameters")
    obs = np.array([p.recall for p in points], dtype=np.float64)
    if form != "eq1" and np.any((obs <= 0) | (obs >= 1)):
        raise ScalingError("observed recall values must lie in (0, 1)")
    if form == "eq1" and np.any(obs <= 0):
        raise ScalingError("observed loss values must be positive")
    sizes = _sizes_of(form, points)
    objective = _Objective(form, sizes, obs, options, free, fixed)
    screened = []
    for idx, start in enumerate(_start_grid(form, free, obs, options)):
        x0 = np.array([_to_free(n, start[n]) for n in free])
        f0, _ = objective(x0)
        tries = 0
        while not math.isfinite(f0) and tries < 60:  # shrink penalty terms until predictions are positive
            for i, n in enumerate(free):
                if n in ("A", "B"):
                    x0[i] -= math.log(4.0)
            f0, _ = objective(x0)
            tries += 1
        if not math.isfinite(f0):
            continue
        res = minimize(objective, x0, max_iter=min(options.screen_iter, options.max_iter),
                       gtol=options.tolerance, ftol=options.ftol)
        screened.append(((res.f, idx), res))
    screened.sort(key=lambda t: t[0])
    best = None
    for (_, idx), res in screened[:options.polish]:
        if not res.converged and res.iterations < options.max_iter:
            more = minimize(objective, res.x, max_iter=options.max_iter - res.iterations,
                            gtol=options.tolerance, ftol=options.ftol)
            if more.f <= res.f:
                more.iterations += res.iterations
                res = more
        key = (res.f, idx)
        if best is None or key < best[0]:
            best = (key, res, idx)
    if best is None:
        p0 = {n: float(_from_free(n, 0.0)) for n in free}
        p0.update(fixed)
        return FitResult(form, p0, math.inf, float("nan"), False, 0, [], -1, options.residual_form, fixed)
    _, res, idx = best
    params = {n: float(_from_free(n, float(res.x[i]))) for i, n in enumerate(free)}
    params.update(fixed)
    pred = np.asarray(evaluate(form, params, sizes), dtype=np.float64)
    resid = (np.log(pred) - objective.target).tolist()
    return FitResult(form, params, float(res.f), r_square(pred, obs), bool(res.converged), int(res.iterations),
                     resid, idx, options.residual_form, fixed)


def heldout_error(form: str, points, holdout_fraction: float = 0.2, seed: int = 0,
                  error_metric: str = "mse-log", options: FitOptions = FitOptions(), **overrides) -> float:
    """Fit on a seeded random subset and score the held-out remainder.

    ``error_metric``: ``"mse-log"`` (mean squared log-prediction error) or ``"mse"``.
    """
    points = list(points)
    n_hold = int(round(holdout_fraction * len(points)))
    if holdout_fraction <= 0 or n_hold == 0:
        raise ScalingError("holdout set is empty; held-out error is undefined")
    if n_hold >= len(points):
        raise ScalingError("holdout leaves no points to fit")
    order = np.random.Generator(np.random.Philox(key=seed)).permutation(len(points))
    hold = sorted(order[:n_hold].tolist())
    keep = sorted(order[n_hold:].tolist())
    res = fit(form, [points[i] for i in keep], options, **overrides)
    test = [points[i] for i in hold]
    pred = np.asarray(evaluate(form, res.params, _sizes_of(form, test)), dtype=np.float64)
    obs = np.array([p.recall for p in test])
    if error_metric == "mse-log":
        with np.errstate(invalid="ignore", divide="ignore"):
            return float(np.mean((np.log(pred) - np.log(obs)) ** 2))
    if error_metric == "mse":
        return float(np.mean((pred - obs) ** 2))
    raise ScalingError(f"unknown error_metric {error_metric!r}")


def write_points(points, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in points:
            f.write(json.dumps({"sizes": dict(p.sizes), "recall": p.recall, "k": p.k}) + "\n")


def read_points(path) -> list[ScalingPoint]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                sizes = {k: float(v) for k, v in d["sizes"].items()}
                out.append(ScalingPoint(sizes, float(d["recall"]), int(d.get("k", 5))))
            except (ValueError, KeyError, TypeError) as exc:
                raise ScalingError(f"{path}:{lineno}: {exc}") from None
    return out


def write_fit(result: FitResult, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(result.to_json())


def read_fit(path) -> FitResult:
    with open(path, encoding="utf-8") as f:
        return FitResult.from_json(f.read())
