"""Independent oracles used only by the test suite.

These deliberately avoid the library's own code paths: expected payoffs are
evaluated from raw samples via sorted prefix sums, or by direct quadrature
against the distribution's pdf, so the closed-form contract formula is
checked against something it cannot share a bug with.
"""
import math

import numpy as np
from scipy import integrate, stats


def mc_payoff_curve(sample, contracts, prices):
    """Monte Carlo mean and standard error of the stand-alone payoff at each
    contract, over one fixed sample.

    Uses prefix sums over the sorted sample so a fine contract grid stays
    cheap: with k samples below contract c,
    sum (c - x)+ = k c - prefix_k and sum (x - c)+ = total - prefix_k - (M - k) c.
    """
    s = np.sort(np.asarray(sample, dtype=float))
    m = s.shape[0]
    prefix = np.concatenate([[0.0], np.cumsum(s)])
    prefix_sq = np.concatenate([[0.0], np.cumsum(s * s)])
    total, total_sq = prefix[-1], prefix_sq[-1]

    c = np.asarray(contracts, dtype=float)
    k = np.searchsorted(s, c, side="left")
    below = prefix[k]
    below_sq = prefix_sq[k]

    e_short = (k * c - below) / m
    e_long = (total - below - (m - k) * c) / m
    e_short_sq = (k * c * c - 2.0 * c * below + below_sq) / m
    e_long_sq = ((total_sq - below_sq) - 2.0 * c * (total - below) + (m - k) * c * c) / m

    pf, pb, ps = prices.day_ahead, prices.rt_buy, prices.rt_sell
    mean = pf * c - pb * e_short + ps * e_long
    # (c-x)+ and (x-c)+ never overlap, so the cross moment vanishes
    second = (
        (pf * c) ** 2
        - 2.0 * pf * c * pb * e_short
        + 2.0 * pf * c * ps * e_long
        + pb * pb * e_short_sq
        + ps * ps * e_long_sq
    )
    variance = np.maximum(second - mean * mean, 0.0)
    return mean, np.sqrt(variance / m)


def quad_expected_payoff(dist, contract, prices):
    """Expected stand-alone payoff by direct quadrature of the truncated pdf."""
    if dist.std_dev == 0.0:
        point = min(max(dist.mean, dist.lower_bound), dist.upper_bound)
        return (
            prices.day_ahead * contract
            - prices.rt_buy * max(contract - point, 0.0)
            + prices.rt_sell * max(point - contract, 0.0)
        )
    a = (dist.lower_bound - dist.mean) / dist.std_dev
    b = (dist.upper_bound - dist.mean) / dist.std_dev
    frozen = stats.truncnorm(a, b, loc=dist.mean, scale=dist.std_dev)
    lower = dist.lower_bound if math.isfinite(dist.lower_bound) else -np.inf
    upper = dist.upper_bound if math.isfinite(dist.upper_bound) else np.inf
    short = 0.0
    if contract > lower:
        short = integrate.quad(lambda x: (contract - x) * frozen.pdf(x), lower, contract)[0]
    long_ = 0.0
    if upper > contract:
        long_ = integrate.quad(lambda x: (x - contract) * frozen.pdf(x), contract, upper)[0]
    return prices.day_ahead * contract - prices.rt_buy * short + prices.rt_sell * long_
