import math

import numpy as np
import pytest

from grscale.scaling import (
    EQ4_FITS,
    HELDOUT_ERRORS,
    SID_FITS,
    FitOptions,
    FitResult,
    ScalingError,
    ScalingParams,
    ScalingPoint,
    eval_eq,
    fit,
    heldout_error,
    huber,
    minimize,
    r_square,
    read_fit,
    read_points,
    sid_params,
    write_fit,
    write_points,
)
from oracles import eq4_scalar, huber_scalar

EQ4_TRUE = {"R0": 0.30, "A": 5.0, "B": 2.0, "gamma": 0.05, "beta": 0.02, "a": 0.40, "b": 0.35}
N_LLM = (0.6e9, 1.7e9, 4e9, 8e9, 14e9)
N_LORA = tuple(r * 2**20 for r in (8, 16, 24, 32, 40))


def eq4_points(params=EQ4_TRUE):
    return [ScalingPoint({"N_LoRA": nl, "N_LLM": nm}, eq4_scalar(params, nl, nm)) for nm in N_LLM for nl in N_LORA]


def random_params(rng):
    return {"R0": rng.uniform(0.2, 0.9), "A": rng.uniform(0.1, 10), "B": rng.uniform(0.1, 10),
            "a": rng.uniform(0.05, 1.5), "b": rng.uniform(0.05, 1.5), "gamma": rng.uniform(0, 1)}


def test_eq8_zero_gain():
    assert eval_eq("eq8", {"B": 2.0, "b": 0.3}, {"N_LoRA": 1e7, "N_SA": 0.0}) == 0.0


def test_eq8_is_eq7_minus_eq6():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p = random_params(rng)
        s = {"N_LoRA": 10 ** rng.uniform(5, 9), "N_LLM": 10 ** rng.uniform(8, 10), "N_SA": 10 ** rng.uniform(4, 8)}
        d = eval_eq("eq7", p, s) - eval_eq("eq6", p, s)
        assert abs(d - eval_eq("eq8", {"B": p["B"], "b": p["b"]}, s)) < 1e-12


def test_eq4_matches_scalar_oracle():
    rng = np.random.default_rng(1)
    for _ in range(200):
        p = dict(random_params(rng), beta=rng.uniform(0, 1))
        nl, nm = 10 ** rng.uniform(5, 9), 10 ** rng.uniform(8, 10)
        assert eval_eq("eq4", p, {"N_LoRA": nl, "N_LLM": nm}) == pytest.approx(eq4_scalar(p, nl, nm), rel=1e-12)


def test_monotone_in_sizes():
    rng = np.random.default_rng(2)
    for _ in range(300):
        # exponents and sizes where every term stays above float resolution
        p = dict(random_params(rng), a=rng.uniform(0.05, 0.8), b=rng.uniform(0.05, 0.8))
        p.update(beta=rng.uniform(0.01, 1), gamma=rng.uniform(0.01, 1), gamma1=rng.uniform(0.01, 1),
                 gamma2=rng.uniform(0.01, 1))
        base = {"N_SI": 1e3, "N_CF": 1e3, "N_RS": 1e3, "N_LLM": 1e3, "N_QT": 1e3, "N_LoRA": 1e3}
        for form, names in (("eq2", ("N_SI", "N_CF")), ("eq3", ("N_RS", "N_LLM", "N_QT")), ("eq4", ("N_LoRA", "N_LLM"))):
            pf = {k: p[k] for k in ScalingParams.from_dict(p).as_dict() if k in _needed(form)}
            for n in names:
                bigger = dict(base, **{n: base[n] * 1.5})
                assert eval_eq(form, pf, bigger) > eval_eq(form, pf, base)
        s = {"N_LoRA": 1e7, "N_SA": 1e6}
        q = {"B": p["B"], "b": p["b"]}
        assert eval_eq("eq8", q, dict(s, N_SA=2e6)) > eval_eq("eq8", q, s)
        assert eval_eq("eq8", q, dict(s, N_LoRA=2e7)) < eval_eq("eq8", q, s)


def _needed(form):
    from grscale.scaling import FORMS
    return FORMS[form][0]


def test_evaluator_errors():
    p = {"R0": 0.3, "A": 1, "B": 1, "a": 0.5, "b": 0.5}
    with pytest.raises(ScalingError, match="N_CF"):
        eval_eq("eq2", p, {"N_SI": 1e6})
    with pytest.raises(ScalingError, match="positive"):
        eval_eq("eq2", p, {"N_SI": 1e6, "N_CF": 0.0})
    with pytest.raises(ScalingError):
        eval_eq("eq2", dict(p, R0=1.5), {"N_SI": 1e6, "N_CF": 1e6})
    with pytest.raises(ScalingError):
        eval_eq("eq9", p, {})


def test_huber_examples():
    assert huber(0.0) == 0.0
    s = 0.03
    assert 0.5 * s * s == s * (s - 0.5 * s) == huber(s)
    assert huber(2 * s) == pytest.approx(1.35e-3, rel=1e-12)
    for r in np.linspace(-0.2, 0.2, 81):
        assert huber(r) == pytest.approx(huber_scalar(r, s), rel=1e-14, abs=1e-18)


def test_huber_derivative_continuous_at_sigma():
    s, h = 0.03, 1e-7
    left = (huber(s - h) - huber(s - 2 * h)) / h
    right = (huber(s + 2 * h) - huber(s + h)) / h
    assert left == pytest.approx(s, abs=1e-6) and right == pytest.approx(s, abs=1e-6)
    assert abs(huber(s + 1e-12) - huber(s - 1e-12)) < 1e-13


def test_r_square_examples():
    assert r_square([1, 2, 3], [1, 2, 3]) == 1.0
    assert r_square([2, 2, 2], [1, 2, 3]) == 0.0
    assert r_square([0.1, 0.2, 0.4], [0.1, 0.2, 0.3]) == pytest.approx(0.5, abs=1e-12)


def test_published_fixtures():
    assert SID_FITS["Beauty"] == {"r_square": 0.94, "R0": 0.4529, "A": 16.8, "B": 1e-2, "a": 0.6, "b": 2.23}
    assert EQ4_FITS["Beauty"] == {"R0": 3e-1, "A": 9.9e2, "B": 3.4e-1, "gamma": 9.08e-2, "beta": 2.10e-2,
                                  "a": 1.98e1, "b": 1.39e-2}
    assert EQ4_FITS["Toys"]["B"] == 9.93e2 and EQ4_FITS["Toys"]["b"] == 2.02e1
    assert HELDOUT_ERRORS["Sports"] == {"beta=0": 1e-3, "beta>0": 3.6e-4}
    for row in HELDOUT_ERRORS.values():
        assert row["beta>0"] < row["beta=0"]


def test_fixture_evaluation_regression():
    for name, p in EQ4_FITS.items():
        for nl, nm in ((8 * 2**20, 0.6e9), (40 * 2**20, 14e9)):
            got = eval_eq("eq4", p, {"N_LoRA": nl, "N_LLM": nm})
            assert got == pytest.approx(eq4_scalar(p, nl, nm), rel=1e-12)
    p = sid_params("Beauty")
    for n in (336e3, 3.3e6, 192e6):
        want = 0.4529 - 16.8 / n ** 0.6 - 1e-2 / n ** 2.23
        assert eval_eq("eq3", p, {"N_RS": n, "N_LLM": 1e9, "N_QT": 768}) == pytest.approx(want, rel=1e-12)


def test_eq4_recovery():
    pts = eq4_points()
    res = fit("eq4", pts)
    pred = np.array([res.predict(p.sizes) for p in pts])
    obs = np.array([p.recall for p in pts])
    assert res.r_square >= 0.9999
    assert np.max(np.abs(pred - obs)) < 1e-6
    ScalingParams.from_dict(res.params).validate("eq4")


def test_constant_observations_recover_r0():
    pts = [ScalingPoint({"N_SI": 10.0 ** i, "N_CF": 10.0 ** j}, 0.37) for i in range(3, 6) for j in range(3, 5)]
    res = fit("eq2", pts, FitOptions(multistart=2), fixed={"A": 1e-300, "B": 1e-300, "a": 1.0, "b": 1.0})
    assert res.params["R0"] == pytest.approx(0.37, rel=1e-10)


def test_fit_rejects_bad_data():
    pts = eq4_points()[:3]
    with pytest.raises(ScalingError, match="free parameters"):
        fit("eq4", pts)
    with pytest.raises(ScalingError, match="lie in"):
        fit("eq2", [ScalingPoint({"N_SI": 1e6, "N_CF": 1e6}, 1.2)] * 6)
    with pytest.raises(ScalingError):
        FitOptions(residual_form="linear")


def test_log_linear_residual_option_runs():
    res = fit("eq4", eq4_points(), FitOptions(multistart=2, residual_form="log-linear", max_iter=200))
    assert res.residual_form == "log-linear"
    ScalingParams.from_dict(res.params).validate("eq4")
    assert math.isfinite(res.objective)


def test_heldout_noise_free_and_beta_comparison():
    pts = eq4_points()
    free = heldout_error("eq4", pts, 0.2, seed=0, options=FitOptions(multistart=8))
    pinned = heldout_error("eq4", pts, 0.2, seed=0, options=FitOptions(multistart=8), fixed={"beta": 0.0})
    assert free < 1e-10
    assert free < pinned


def test_heldout_empty_holdout():
    with pytest.raises(ScalingError, match="empty"):
        heldout_error("eq4", eq4_points(), 0.0)


def test_lbfgs_history_non_increasing():
    def rosen(x):
        f = (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
        g = np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])
        return f, g

    res = minimize(rosen, [-1.2, 1.0], max_iter=500, gtol=1e-10)
    assert res.converged
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-6)
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_points_and_fit_files(tmp_path):
    pts = eq4_points()
    write_points(pts, tmp_path / "p.jsonl")
    assert read_points(tmp_path / "p.jsonl") == pts
    res = FitResult("eq4", dict(EQ4_TRUE), 1e-20, 1.0, True, 10, [0.0] * 25)
    write_fit(res, tmp_path / "f.json")
    back = read_fit(tmp_path / "f.json")
    assert back.to_json() == res.to_json()
