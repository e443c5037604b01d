"""Closed-form scaling-law evaluators.

Every form works on plain floats / numpy arrays and, for fitting, on autodiff
tensors (parameters as tensors, sizes as arrays).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor

SIZE_NAMES = ("N_RS", "N_LLM", "N_QT", "N_LoRA", "N_SA", "N_SI", "N_CF")


class ScalingError(ValueError):
    pass


# parameters each form uses, and the size names it reads
FORMS: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "eq1": (("E", "A", "B", "a", "b"), ("N_SI", "N_CF")),
    "eq2": (("R0", "A", "B", "a", "b"), ("N_SI", "N_CF")),
    "eq3": (("R0", "A", "B", "a", "b", "gamma1", "gamma2"), ("N_RS", "N_LLM", "N_QT")),
    "eq4": (("R0", "A", "B", "a", "b", "gamma", "beta"), ("N_LoRA", "N_LLM")),
    "eq6": (("R0", "A", "B", "a", "b", "gamma"), ("N_LoRA", "N_LLM")),
    "eq7": (("R0", "A", "B", "a", "b", "gamma"), ("N_LoRA", "N_LLM", "N_SA")),
    "eq8": (("B", "b"), ("N_LoRA", "N_SA")),
}

POSITIVE = ("E", "A", "B", "a", "b")
UNIT = ("R0", "gamma", "beta", "gamma1", "gamma2")


@dataclass
class ScalingParams:
    R0: float | None = None
    E: float | None = None
    A: float | None = None
    B: float | None = None
    a: float | None = None
    b: float | None = None
    gamma: float | None = None
    beta: float | None = None
    gamma1: float | None = None
    gamma2: float | None = None

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ScalingError(f"unknown scaling parameters {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    def validate(self, form: str | None = None):
        d = self.as_dict()
        for k, v in d.items():
            if not np.isfinite(v):
                raise ScalingError(f"{k} is not finite")
        for k in ("A", "B", "a", "b"):
            if k in d and d[k] <= 0:
                raise ScalingError(f"{k} must be > 0, got {d[k]}")
        if "E" in d and d["E"] < 0:
            raise ScalingError("E must be >= 0")
        if "R0" in d and not 0 < d["R0"] < 1:
            raise ScalingError(f"R0 must lie in (0, 1), got {d['R0']}")
        for k in ("gamma", "beta", "gamma1", "gamma2"):
            if k in d and not 0 <= d[k] <= 1:
                raise ScalingError(f"{k} must lie in [0, 1], got {d[k]}")
        if form is not None:
            missing = [k for k in FORMS[form][0] if k not in d]
            if missing:
                raise ScalingError(f"{form} needs parameters {missing}")
        return self


def _sizes(form: str, sizes: dict) -> dict:
    if form not in FORMS:
        raise ScalingError(f"unknown form {form!r}; expected one of {sorted(FORMS)}")
    out = {}
    for name in FORMS[form][1]:
        if name not in sizes:
            raise ScalingError(f"{form} needs size {name!r}")
        v = np.asarray(sizes[name], dtype=np.float64)
        if np.any(~(v > 0)):
            raise ScalingError(f"size {name} must be positive")
        out[name] = v
    return out


def _inv_pow(base, expo):
    """``base ** -expo`` written as exp(-expo * log base) so tensors flow through it."""
    if isinstance(base, Tensor) or isinstance(expo, Tensor):
        lb = ad.log(base) if isinstance(base, Tensor) else np.log(base)
        e = expo if isinstance(expo, Tensor) else Tensor(np.asarray(expo, dtype=np.float64))
        return ad.exp(ad.neg(e * lb))
    return np.exp(-expo * np.log(base))


def _eff(n, coef, other):
    """``n + coef * other`` with the tensor operand kept on the left."""
    if isinstance(coef, Tensor):
        return coef * other + n
    return n + coef * other


def evaluate(form: str, p: dict, s: dict):
    """Raw evaluation without validation; ``p`` maps names to floats or tensors."""
    if form == "eq1":
        return p["E"] + p["A"] * _inv_pow(s["N_SI"], p["a"]) + p["B"] * _inv_pow(s["N_CF"], p["b"])
    if form == "eq2":
        return p["R0"] - p["A"] * _inv_pow(s["N_SI"], p["a"]) - p["B"] * _inv_pow(s["N_CF"], p["b"])
    if form == "eq3":
        n = _eff(_eff(s["N_RS"], p["gamma1"], s["N_LLM"]), p["gamma2"], s["N_QT"])
        return p["R0"] - p["A"] * _inv_pow(n, p["a"]) - p["B"] * _inv_pow(s["N_RS"], p["b"])
    if form == "eq4":
        n1 = _eff(s["N_LoRA"], p["gamma"], s["N_LLM"])
        n2 = _eff(s["N_LoRA"], p["beta"], s["N_LLM"])
        return p["R0"] - p["A"] * _inv_pow(n1, p["a"]) - p["B"] * _inv_pow(n2, p["b"])
    if form == "eq6":
        n1 = _eff(s["N_LoRA"], p["gamma"], s["N_LLM"])
        return p["R0"] - p["A"] * _inv_pow(n1, p["a"]) - p["B"] * _inv_pow(s["N_LoRA"], p["b"])
    if form == "eq7":
        n1 = _eff(s["N_LoRA"], p["gamma"], s["N_LLM"])
        return p["R0"] - p["A"] * _inv_pow(n1, p["a"]) - p["B"] * _inv_pow(s["N_LoRA"] + s["N_SA"], p["b"])
    if form == "eq8":
        return p["B"] * _inv_pow(s["N_LoRA"], p["b"]) - p["B"] * _inv_pow(s["N_LoRA"] + s["N_SA"], p["b"])
    raise ScalingError(f"unknown form {form!r}")


def eval_eq(form: str, params, sizes: dict):
    """Predicted Recall@k (or loss for eq1, or the Recall gain for eq8).

    ``eq8`` accepts ``N_SA = 0`` (no CF embedding), which yields exactly 0.
    """
    if form not in FORMS:
        raise ScalingError(f"unknown form {form!r}; expected one of {sorted(FORMS)}")
    p = params if isinstance(params, ScalingParams) else ScalingParams.from_dict(params)
    p.validate(form)
    if form == "eq8":
        if "N_SA" not in sizes or "N_LoRA" not in sizes:
            raise ScalingError("eq8 needs sizes N_LoRA and N_SA")
        s = {"N_LoRA": _sizes("eq6", {"N_LoRA": sizes["N_LoRA"], "N_LLM": 1.0})["N_LoRA"],
             "N_SA": np.asarray(sizes["N_SA"], dtype=np.float64)}
        if np.any(s["N_SA"] < 0):
            raise ScalingError("size N_SA must be non-negative")
    else:
        s = _sizes(form, sizes)
    out = evaluate(form, p.as_dict(), s)
    return float(out) if np.ndim(out) == 0 else out


def huber(residual, sigma: float = 0.03):
    """Huber penalty: ``r^2 / 2`` for ``|r| <= sigma``, else ``sigma * (|r| - sigma / 2)``."""
    if sigma <= 0:
        raise ScalingError("sigma must be positive")
    r = np.asarray(residual, dtype=np.float64)
    ar = np.abs(r)
    out = np.where(ar <= sigma, 0.5 * r * r, sigma * (ar - 0.5 * sigma))
    return float(out) if out.ndim == 0 else out
