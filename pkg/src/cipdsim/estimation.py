"""Histogramming, mixture fitting, classification and QE back-calculation.

The measured carrier values follow a Poisson-weighted train of Gaussians:
component ``l`` sits at ``l`` electrons with weight ``pois_pmf(l; n)`` and a
shared width ``sigma`` set by the readout noise,

    density(x) = 1/(sqrt(2 pi) sigma)
                 * sum_{l=0}^{l_max} pois_pmf(l; n) exp(-(x-l)^2 / 2 sigma^2).

Only ``(n, sigma)`` are free: the component means are pinned to the integer
electron grid (gain calibration happens upstream, so the x axis is already
in electrons) and the weights are tied through the single Poisson mean.
Fitting is expectation-maximization on the component responsibilities, which
has closed-form updates for both parameters and monotone log-likelihood.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal, special

#: Lower clamp on the fitted sigma (electrons); prevents zero-variance
#: collapse on degenerate data. Far below any physical readout width.
SIGMA_FLOOR = 0.01

#: Lower clamp on the fitted Poisson mean; keeps logs defined when the data
#: contain no light at all.
_N_FLOOR = 1e-9

_EVENT_CHUNK = 1 << 16
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class InsufficientDataError(ValueError):
    """Too few events for the requested operation."""


@dataclass(frozen=True)
class Histogram:
    """Binned carrier values.

    ``origin`` is the left edge of ``counts[0]``; bins are aligned so their
    centers fall on multiples of ``bin_width`` (photon-number positions).
    """

    bin_width: float
    origin: float
    counts: np.ndarray
    total: int

    def __post_init__(self) -> None:
        if int(np.sum(self.counts)) != self.total:
            raise ValueError("total must equal the sum of counts")

    @property
    def bin_centers(self) -> np.ndarray:
        return self.origin + (np.arange(len(self.counts)) + 0.5) * self.bin_width

    @property
    def bin_edges(self) -> np.ndarray:
        return self.origin + np.arange(len(self.counts) + 1) * self.bin_width


@dataclass(frozen=True)
class MixtureFit:
    """Result of :func:`fit_mixture`."""

    n_hat: float
    sigma_hat: float
    l_max: int
    log_likelihood: float
    n_iterations: int
    converged: bool
    stderr_n: float


def build_histogram(events, bin_width: float) -> Histogram:
    """Bin events on a grid whose bin centers sit on multiples of the width."""
    if not bin_width > 0:
        raise ValueError(f"bin_width must be > 0, got {bin_width}")
    events = np.asarray(events, dtype=float)
    if events.size == 0:
        raise InsufficientDataError("cannot histogram an empty event list")
    # grid bin 0 spans [-bin_width/2, bin_width/2); shift so the first
    # occupied grid bin becomes counts[0]
    idx = np.floor((events + 0.5 * bin_width) / bin_width).astype(np.int64)
    i0, i1 = int(idx.min()), int(idx.max())
    counts = np.bincount(idx - i0, minlength=i1 - i0 + 1)
    return Histogram(
        bin_width=bin_width,
        origin=(i0 - 0.5) * bin_width,
        counts=counts.astype(np.int64),
        total=int(events.size),
    )


def _log_poisson_weights(n: float, l_max: int) -> np.ndarray:
    ls = np.arange(l_max + 1)
    return ls * np.log(n) - n - special.gammaln(ls + 1.0)


def _row_softmax(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise (logsumexp, normalized exponentials) sharing one exp pass.

    Rows whose entries are all -inf get lse = -inf and zero weights.
    """
    m = np.max(a, axis=1)
    safe_m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(a - safe_m[:, None])
    s = np.sum(e, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lse = safe_m + np.log(s)
        r = e / s[:, None]
    r[s == 0.0] = 0.0
    return lse, r


def mixture_density(x, n: float, sigma: float, l_max: int = 20):
    """Poisson-weighted Gaussian mixture density at ``x`` (per electron).

    Computed in log space so that large ``l_max`` and far tails do not
    underflow term-by-term. The density integrates to the Poisson mass below
    the cutoff (slightly less than 1), matching the truncated sum.
    """
    if not n > 0:
        raise ValueError(f"n must be > 0, got {n}")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if not l_max >= 1:
        raise ValueError(f"l_max must be >= 1, got {l_max}")
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    log_w = _log_poisson_weights(n, l_max)
    ls = np.arange(l_max + 1)
    with np.errstate(over="ignore"):
        a = log_w - 0.5 * ((x_arr[:, None] - ls) / sigma) ** 2
    lse, _ = _row_softmax(a)
    out = np.exp(lse - np.log(sigma) - _LOG_SQRT_2PI)
    return float(out[0]) if np.isscalar(x) or np.ndim(x) == 0 else out


def log_likelihood(events, n: float, sigma: float, l_max: int = 20) -> float:
    """Total log-likelihood of the events under the mixture.

    Uses log-sum-exp per event. If any event's density underflows to zero
    the function warns and returns ``-inf``.
    """
    events = np.asarray(events, dtype=float)
    if events.size == 0:
        raise InsufficientDataError("log_likelihood needs at least one event")
    total = 0.0
    log_w = _log_poisson_weights(n, l_max)
    ls = np.arange(l_max + 1)
    log_norm = -np.log(sigma) - _LOG_SQRT_2PI
    for lo in range(0, events.size, _EVENT_CHUNK):
        x = events[lo : lo + _EVENT_CHUNK]
        with np.errstate(over="ignore"):
            a = log_w - 0.5 * ((x[:, None] - ls) / sigma) ** 2
        lse, _ = _row_softmax(a)
        if np.any(np.isneginf(lse)):
            warnings.warn(
                "mixture density underflowed to zero for some events",
                RuntimeWarning,
                stacklevel=2,
            )
            return float("-inf")
        total += float(np.sum(lse + log_norm))
    return total


def log_likelihood_grad(
    events, n: float, sigma: float, l_max: int = 20
) -> tuple[float, float]:
    """Gradient of :func:`log_likelihood` with respect to ``(n, sigma)``."""
    events = np.asarray(events, dtype=float)
    log_w = _log_poisson_weights(n, l_max)
    ls = np.arange(l_max + 1)
    g_n = 0.0
    g_s = 0.0
    for lo in range(0, events.size, _EVENT_CHUNK):
        x = events[lo : lo + _EVENT_CHUNK]
        d = x[:, None] - ls
        a = log_w - 0.5 * (d / sigma) ** 2
        _, r = _row_softmax(a)
        g_n += float(np.sum(r @ (ls / n - 1.0)))
        g_s += float(np.sum(r * (d * d / sigma**3 - 1.0 / sigma)))
    return g_n, g_s


def _em_pass(events, n, sigma, l_max):
    """One E-step: log-likelihood plus the sufficient statistics.

    Accumulation is chunked in a fixed order so results do not depend on
    how the event array was produced.
    """
    log_w = _log_poisson_weights(n, l_max)
    ls = np.arange(l_max + 1)
    log_norm = -np.log(sigma) - _LOG_SQRT_2PI
    ll = 0.0
    sum_rl = 0.0
    sum_rsq = 0.0
    for lo in range(0, events.size, _EVENT_CHUNK):
        x = events[lo : lo + _EVENT_CHUNK]
        d = x[:, None] - ls
        a = log_w - 0.5 * (d / sigma) ** 2
        lse, r = _row_softmax(a)
        ll += float(np.sum(lse + log_norm))
        sum_rl += float(np.sum(r @ ls))
        sum_rsq += float(np.sum(r * d * d))
    return ll, sum_rl, sum_rsq


def fit_mixture(
    events,
    init: tuple[float, float] | None = None,
    l_max: int = 20,
    tol: float = 1e-8,
    max_iter: int = 500,
) -> MixtureFit:
    """Maximum-likelihood fit of ``(n, sigma)`` by EM.

    The E-step distributes each event over the integer components; the
    M-step re-estimates the Poisson mean from the responsibility-weighted
    component indices and the width from the responsibility-weighted squared
    residuals. Iterates until the log-likelihood change drops below ``tol``
    or ``max_iter`` is reached (``converged=False``, best-so-far values).

    ``stderr_n`` is the asymptotic standard error of ``n_hat`` from the
    observed information (finite-difference Hessian at the optimum).

    Raises
    ------
    InsufficientDataError
        Fewer than 50 events.
    ValueError
        Sample mean above ``l_max / 2``; fitting that close to the cutoff
        would truncation-bias the Poisson mean. Raise ``l_max`` instead.
    """
    events = np.asarray(events, dtype=float)
    if events.size < 50:
        raise InsufficientDataError(
            f"fit_mixture needs >= 50 events, got {events.size}"
        )
    sample_mean = float(np.mean(events))
    if sample_mean > l_max / 2.0:
        raise ValueError(
            f"sample mean {sample_mean:.3g} exceeds l_max/2 = {l_max / 2}; "
            "increase l_max to avoid truncation bias"
        )
    if init is not None:
        n, sigma = float(init[0]), float(init[1])
        if not n > 0 or not sigma > 0:
            raise ValueError("init values must be positive")
    else:
        n = max(sample_mean, 0.05)
        sigma = 0.3

    ll_prev = -np.inf
    ll = -np.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        ll, sum_rl, sum_rsq = _em_pass(events, n, sigma, l_max)
        if ll < ll_prev - 1e-8 * (1.0 + abs(ll_prev)):
            raise RuntimeError(
                f"EM log-likelihood decreased ({ll_prev} -> {ll}); "
                "this indicates a broken update"
            )
        if abs(ll - ll_prev) < tol:
            converged = True
            break
        ll_prev = ll
        n = max(sum_rl / events.size, _N_FLOOR)
        sigma = max(np.sqrt(sum_rsq / events.size), SIGMA_FLOOR)

    stderr_n = _stderr_n(events, n, sigma, l_max)
    return MixtureFit(
        n_hat=n,
        sigma_hat=sigma,
        l_max=l_max,
        log_likelihood=ll,
        n_iterations=iterations,
        converged=converged,
        stderr_n=stderr_n,
    )


def _stderr_n(events, n, sigma, l_max) -> float:
    """Asymptotic std error of n from the finite-difference observed information."""
    h_n = min(1e-5 * max(n, 1e-2), 0.5 * n)
    h_s = min(1e-5 * max(sigma, 1e-2), 0.5 * sigma)
    gn_p = log_likelihood_grad(events, n + h_n, sigma, l_max)
    gn_m = log_likelihood_grad(events, n - h_n, sigma, l_max)
    gs_p = log_likelihood_grad(events, n, sigma + h_s, l_max)
    gs_m = log_likelihood_grad(events, n, sigma - h_s, l_max)
    h_nn = (gn_p[0] - gn_m[0]) / (2 * h_n)
    h_ns = 0.5 * ((gn_p[1] - gn_m[1]) / (2 * h_n) + (gs_p[0] - gs_m[0]) / (2 * h_s))
    h_ss = (gs_p[1] - gs_m[1]) / (2 * h_s)
    info = -np.array([[h_nn, h_ns], [h_ns, h_ss]])
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return float("nan")
    var_n = cov[0, 0]
    return float(np.sqrt(var_n)) if var_n > 0 else float("nan")


def map_boundaries(n: float, sigma: float, l_max: int = 20) -> np.ndarray:
    """Decision boundaries of the MAP classifier between l and l+1.

    With a shared width the pairwise log-posterior difference is linear in
    x, so the boundary sits at ``l + 1/2 + sigma^2 ln(P(l)/P(l+1))`` =
    ``l + 1/2 + sigma^2 ln((l+1)/n)``; boundaries shift toward the
    lower-prior component.
    """
    ls = np.arange(l_max)
    return ls + 0.5 + sigma**2 * np.log((ls + 1.0) / n)


def classify(x, n: float, sigma: float, mode: str = "nearest", l_max: int = 20):
    """Assign carrier values to photon numbers.

    ``nearest`` rounds to the closest non-negative integer (ties upward);
    ``map`` maximizes the Poisson-weighted component posterior over
    ``l <= l_max``.
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if mode == "nearest":
        out = np.maximum(np.floor(x_arr + 0.5), 0.0).astype(np.int64)
    elif mode == "map":
        bounds = map_boundaries(n, sigma, l_max)
        out = np.searchsorted(bounds, x_arr, side="right").astype(np.int64)
    else:
        raise ValueError(f"mode must be 'nearest' or 'map', got {mode!r}")
    return int(out[0]) if np.isscalar(x) or np.ndim(x) == 0 else out


def discrimination_error(
    n: float, sigma: float, mode: str = "nearest", l_max: int = 20
) -> float:
    """Expected misclassification probability under the mixture model.

    Averages ``Pr[classify(l + eps) != l]`` over the Poisson weights, with
    ``eps`` Gaussian of width ``sigma``; closed form via the normal CDF.
    In nearest mode the l=0 component can only err upward (negative values
    round to zero).
    """
    if sigma == 0:
        return 0.0
    if not sigma > 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    ls = np.arange(l_max + 1)
    weights = np.exp(_log_poisson_weights(n, l_max))
    if mode == "nearest":
        q = special.ndtr(-0.5 / sigma)
        per_comp = np.full(l_max + 1, 2.0 * q)
        per_comp[0] = q
    elif mode == "map":
        bounds = map_boundaries(n, sigma, l_max)
        lower = np.concatenate(([-np.inf], bounds))   # region floor of l
        upper = np.concatenate((bounds, [np.inf]))    # region ceiling of l
        per_comp = special.ndtr((lower - ls) / sigma) + special.ndtr(
            (ls - upper) / sigma
        )
    else:
        raise ValueError(f"mode must be 'nearest' or 'map', got {mode!r}")
    return float(np.sum(weights * per_comp))


def estimate_qe(
    n_hat: float, mean_photons_at_fiber: float, eta_c: float, stderr_n: float | None = None
):
    """Back-calculate quantum efficiency from a fitted carrier mean.

    Returns ``n_hat / (mean_photons_at_fiber * eta_c)``; with ``stderr_n``
    given, returns ``(qe, qe_stderr)`` with the error propagated through the
    same linear map.
    """
    denom = mean_photons_at_fiber * eta_c
    if not denom > 0:
        raise ValueError(
            "mean_photons_at_fiber * eta_c must be > 0, got "
            f"{mean_photons_at_fiber} * {eta_c}"
        )
    qe = n_hat / denom
    if stderr_n is None:
        return qe
    return qe, stderr_n / denom


def expected_bin_counts(hist: Histogram, n: float, sigma: float, l_max: int = 20) -> np.ndarray:
    """Model-predicted counts per histogram bin (total times the bin mass)."""
    edges = hist.bin_edges
    ls = np.arange(l_max + 1)
    weights = np.exp(_log_poisson_weights(n, l_max))
    cdf_at_edges = special.ndtr((edges[:, None] - ls) / sigma) @ weights
    return hist.total * np.diff(cdf_at_edges)


def goodness_of_fit(hist: Histogram, fit: MixtureFit) -> tuple[float, int]:
    """Pearson chi-square of a histogram against a converged fit.

    Bins are merged left to right until every expected count reaches 5 (a
    trailing remainder is folded into the last group); degrees of freedom
    are the merged bins minus one minus the two fitted parameters.
    """
    if not fit.converged:
        raise ValueError("goodness_of_fit requires a converged fit")
    expected = expected_bin_counts(hist, fit.n_hat, fit.sigma_hat, fit.l_max)
    obs_groups: list[float] = []
    exp_groups: list[float] = []
    o_acc = 0.0
    e_acc = 0.0
    for o, e in zip(hist.counts, expected):
        o_acc += o
        e_acc += e
        if e_acc >= 5.0:
            obs_groups.append(o_acc)
            exp_groups.append(e_acc)
            o_acc = 0.0
            e_acc = 0.0
    if e_acc > 0.0 and obs_groups:
        obs_groups[-1] += o_acc
        exp_groups[-1] += e_acc
    if len(obs_groups) < 4:
        raise ValueError(
            f"only {len(obs_groups)} merged bins with expected counts >= 5; "
            "need at least 4 for a chi-square test"
        )
    obs = np.asarray(obs_groups)
    exp = np.asarray(exp_groups)
    chi2 = float(np.sum((obs - exp) ** 2 / exp))
    dof = len(obs_groups) - 1 - 2
    return chi2, dof


def sigma_from_dark(dark_events) -> float:
    """Unbiased sample standard deviation of dark-run events (electrons)."""
    dark_events = np.asarray(dark_events, dtype=float)
    if dark_events.size < 2:
        raise InsufficientDataError(
            f"sigma_from_dark needs >= 2 events, got {dark_events.size}"
        )
    return float(np.std(dark_events, ddof=1))


def histogram_peaks(
    hist: Histogram,
    min_separation: float = 0.5,
    prominence_frac: float = 0.02,
) -> np.ndarray:
    """Centers (electrons) of local maxima in a histogram.

    Peaks must be at least ``min_separation`` electrons apart and stand out
    by ``prominence_frac`` of the tallest bin; used to check that the
    multipeak structure resolves individual photon numbers.
    """
    counts = hist.counts.astype(float)
    distance = max(1, int(round(min_separation / hist.bin_width)))
    peaks, _ = signal.find_peaks(
        counts, distance=distance, prominence=prominence_frac * counts.max()
    )
    return hist.bin_centers[peaks]
