"""Confirmation-delay analysis under a malicious fraction of the poll stream.

Model: a party repeatedly queries transactions; a fraction ``gamma`` of the
stream is malicious.  Querying an honest transaction advances the target's
acceptance counter by one; querying a malicious one makes the poll fail and
the counter restart.  The quantity of interest is the number of queried
transactions (no-ops not counted) until the counter reaches ``beta1``.

Grouping the stream into attempts that end either at a malicious pick or at
the counter reaching the threshold makes the attempt-success probability
``(1-gamma)**beta1`` and the delay a compound-geometric sum; the composed
closed form below is exactly the expectation of that restart chain, which the
Markov oracle and the Monte Carlo estimator simulate independently.  The
paper's displayed closed form disagrees with the composition of its own
pieces in the sign of two terms; it is kept available for comparison.

Everything is evaluated in exact rational arithmetic and converted to float
at the end, so near-zero ``gamma`` suffers no cancellation.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .simnet import substream


def _check_gamma(gamma: float, allow_zero: bool = True) -> None:
    lo_ok = gamma > 0 or (allow_zero and gamma == 0)
    if not (lo_ok and gamma < 1):
        raise ValueError(f"gamma={gamma}: need a malicious fraction in [0, 1)")


def expected_failed_attempt_length(beta1: int, gamma: float) -> float:
    """Mean number of transactions queried in an attempt that ends malicious.

    An attempt samples until a malicious transaction shows up or ``beta1``
    honest ones went through; conditioned on failing, its length k has
    probability gamma*(1-gamma)**(k-1) normalized over k <= beta1.
    At ``gamma = 0`` the failure-conditioned mean is taken as the limit
    (beta1 + 1) / 2.
    """
    if beta1 < 1:
        raise ValueError("beta1 must be at least 1")
    _check_gamma(gamma)
    if gamma == 0:
        return (beta1 + 1) / 2
    g = Fraction(gamma)
    q = 1 - g
    qb = q ** beta1
    value = (1 - qb * (1 + beta1 * g)) / (g * (1 - qb))
    return float(value)


def attempt_success_probability(beta1: int, gamma: float,
                                exponent: str = "composed") -> float:
    """Probability that an attempt reaches the threshold without a reset.

    ``exponent="composed"`` uses (1-gamma)**beta1, the value consistent with
    the composed delay formula; ``"stated"`` uses (1-gamma)**(beta1-1), the
    exponent the source analysis states for the same quantity.
    """
    _check_gamma(gamma)
    e = {"composed": beta1, "stated": beta1 - 1}[exponent]
    return (1.0 - gamma) ** e


def expected_delay(beta1: int, gamma: float, form: str = "composed") -> float:
    """Expected queried transactions before the target is accepted.

    ``form="composed"``: beta1 + E[failed attempt length] * (E[attempts] - 1)
    with E[attempts] = (1-gamma)**(-beta1).  ``form="displayed"`` evaluates
    the alternative closed form kept for comparison; the two differ.
    """
    if beta1 < 1:
        raise ValueError("beta1 must be at least 1")
    _check_gamma(gamma)
    if gamma == 0:
        return float(beta1)
    g = Fraction(gamma)
    q = 1 - g
    qb = q ** beta1
    if form == "composed":
        value = beta1 + (1 - qb * (1 + beta1 * g)) / (g * qb)
    elif form == "displayed":
        num = 1 + (2 + beta1 * g) * qb - (qb * qb) * (1 + beta1 * g)
        value = beta1 + num / (g * qb * (1 - qb))
    else:
        raise ValueError(f"unknown form {form!r}")
    return float(value)


def expected_delay_glacier(beta: int, gamma: float) -> float:
    """Expected queried transactions under the blame-carrying variant.

    Malicious polls stop resetting anything there, so only the honest share
    of the stream counts: beta / (1 - gamma).
    """
    if beta < 1:
        raise ValueError("beta must be at least 1")
    _check_gamma(gamma)
    return beta / (1.0 - gamma)


def markov_expected_delay(beta1: int, gamma: float, exact: bool = False):
    """Exact restart-chain expectation, solved independently of the formulas.

    States are counter values 0..beta1; a step is one queried transaction:
    honest with probability 1-gamma moves c -> c+1, malicious resets c -> 0.
    Solved by expressing E[steps from c] = a_c + b_c * E[steps from 0] and
    closing the loop, in exact rationals.
    """
    if beta1 < 1:
        raise ValueError("beta1 must be at least 1")
    _check_gamma(gamma)
    g = Fraction(gamma)
    q = 1 - g
    a = Fraction(0)
    b = Fraction(0)
    for _ in range(beta1):
        a = 1 + q * a
        b = q * b + g
    e0 = a / (1 - b)
    return e0 if exact else float(e0)


def monte_carlo_delay(beta1: int, gamma: float, runs: int, seed: int,
                      reset_to: int = 0):
    """Simulate the counter process; returns (mean, ci_lo, ci_hi).

    Each run draws queried transactions until the counter reaches ``beta1``:
    honest draws increment it, malicious draws send it back to ``reset_to``
    (0 for the plain restart chain; 1 models the no-op immediately following
    a failed poll).  The confidence interval is the normal 95% band.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if beta1 < 1:
        raise ValueError("beta1 must be at least 1")
    _check_gamma(gamma)
    rng = np.random.default_rng(substream(seed, "mc", beta1).getrandbits(64))
    out = np.empty(runs, dtype=np.int64)
    if gamma == 0.0:
        out[:] = beta1
    else:
        ids = np.arange(runs)
        c = np.zeros(runs, dtype=np.int32)
        steps = np.zeros(runs, dtype=np.int64)
        while ids.size:
            u = rng.random(ids.size)
            steps += 1
            c = np.where(u < gamma, np.int32(reset_to), c + 1)
            done = c >= beta1
            if done.any():
                out[ids[done]] = steps[done]
                keep = ~done
                ids = ids[keep]
                c = c[keep]
                steps = steps[keep]
    mean = float(out.mean())
    if runs > 1:
        half = 1.96 * float(out.std(ddof=1)) / math.sqrt(runs)
    else:
        half = 0.0
    return mean, mean - half, mean + half


SWEEP_COLUMNS = (
    "gamma", "beta1", "formula_composed", "formula_displayed",
    "glacier_formula", "mc_mean", "mc_ci_lo", "mc_ci_hi", "sim_mean",
)


def sweep_rows(gammas, beta1: int, runs: int, seed: int, sim_means=None):
    """One row per gamma: formulas, Monte Carlo with CI, optional sim means."""
    rows = []
    for i, gamma in enumerate(gammas):
        mean, lo, hi = monte_carlo_delay(beta1, gamma, runs, substream(
            seed, "sweep", i).getrandbits(32))
        rows.append({
            "gamma": gamma,
            "beta1": beta1,
            "formula_composed": expected_delay(beta1, gamma, "composed"),
            "formula_displayed": expected_delay(beta1, gamma, "displayed")
            if gamma > 0 else float(beta1),
            "glacier_formula": expected_delay_glacier(beta1, gamma),
            "mc_mean": mean,
            "mc_ci_lo": lo,
            "mc_ci_hi": hi,
            "sim_mean": None if sim_means is None else sim_means.get(gamma),
        })
    return rows
