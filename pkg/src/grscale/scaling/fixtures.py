"""Published fitted parameters, stored verbatim as evaluator regression fixtures.

These are not recovery targets: the raw experimental points were never released
and several exponents make individual terms numerically negligible.
"""

# SID-based GR, Recall@k = R0 - A / N_RS^a - B / N_RS^b
SID_FITS = {
    "Beauty": {"r_square": 0.94, "R0": 0.4529, "A": 16.8, "B": 1e-2, "a": 0.6, "b": 2.23},
    "Sports": {"r_square": 0.97, "R0": 3e-1, "A": 24.8, "B": 1e-2, "a": 0.63, "b": 1.97},
    "Toys": {"r_square": 0.94, "R0": 1.7e-1, "A": 6.1, "B": 1e-2, "a": 0.52, "b": 2.02},
}

# LLM-as-RS with LoRA, the two-coefficient form
EQ4_FITS = {
    "Beauty": {"R0": 3e-1, "A": 9.9e2, "B": 3.4e-1, "gamma": 9.08e-2, "beta": 2.10e-2, "a": 1.98e1, "b": 1.39e-2},
    "Sports": {"R0": 3e-1, "A": 9.87e2, "B": 3.35e-1, "gamma": 1.82e-2, "beta": 1.69e-2, "a": 2.02e1, "b": 9.47e-3},
    "Toys": {"R0": 1.7e-1, "A": 2.19e-1, "B": 9.93e2, "gamma": 1.74e-1, "beta": 2.29e-2, "a": 2.47e-2, "b": 2.02e1},
}

# held-out errors with beta pinned to zero versus beta free
HELDOUT_ERRORS = {
    "Beauty": {"beta=0": 4.2e-4, "beta>0": 3.5e-4},
    "Sports": {"beta=0": 1e-3, "beta>0": 3.6e-4},
    "Toys": {"beta=0": 1.2e-3, "beta>0": 9.8e-4},
}


def sid_params(dataset: str) -> dict:
    """Table entry as eq3 parameters with both effective coefficients at zero."""
    d = dict(SID_FITS[dataset])
    d.pop("r_square")
    d.update(gamma1=0.0, gamma2=0.0)
    return d
