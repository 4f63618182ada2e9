"""Spatially dependent selection prior and truncated-distribution tools.

The selection prior ties a gene's inclusion flag at a probe to its flags at
the flanking probes, with strength driven by how often the hidden states
persist across each inter-probe gap and by the gap width. The joint prior over
an inclusion matrix is the product of the one-site conditionals
(pseudo-likelihood), which keeps Metropolis ratios local: changing states in
one column only moves the site terms at that column and its two neighbors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc, gammainccinv, gammaln, log_ndtr, ndtr, ndtri

from .model import RegressionHyper, ValidationError

# The same expm1 the decay numerator uses, not math.e - 1.0: the decay at gap
# zero must divide to exactly 1.0, and the constants differ in the last bit.
E_MINUS_ONE = float(np.expm1(1.0))
LOG_TINY = math.log(1e-300)


@dataclass(frozen=True)
class PersistenceWeights:
    """Per-column mixture weights of the selection prior.

    ``adjacency[m]`` scores the gap between probes m and m+1 (length M-1);
    ``fresh``, ``copy_left``, ``copy_right`` (length M) weight drawing a fresh
    inclusion flag versus copying the left or right neighbor's flag. At every
    column the three weights sum to one; boundary columns always draw fresh.
    """

    adjacency: np.ndarray
    fresh: np.ndarray
    copy_left: np.ndarray
    copy_right: np.ndarray

    def __post_init__(self) -> None:
        adjacency = np.asarray(self.adjacency, dtype=np.float64)
        fresh = np.asarray(self.fresh, dtype=np.float64)
        copy_left = np.asarray(self.copy_left, dtype=np.float64)
        copy_right = np.asarray(self.copy_right, dtype=np.float64)
        n_probes = fresh.shape[0]
        if adjacency.shape != (n_probes - 1,):
            raise ValidationError(
                f"adjacency must have length {n_probes - 1}, got {adjacency.shape}"
            )
        for name, arr in (
            ("adjacency", adjacency),
            ("fresh", fresh),
            ("copy_left", copy_left),
            ("copy_right", copy_right),
        ):
            if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
                raise ValidationError(f"{name} entries must lie in [0, 1]")
        total = fresh + copy_left + copy_right
        if np.any(np.abs(total - 1.0) > 1e-12):
            m = int(np.argmax(np.abs(total - 1.0)))
            raise ValidationError(
                f"weights at column {m} sum to {total[m]!r}, not 1"
            )
        if copy_left[0] != 0.0:
            raise ValidationError("copy_left must vanish at the first column")
        if copy_right[-1] != 0.0:
            raise ValidationError("copy_right must vanish at the last column")
        for name, arr in (
            ("adjacency", adjacency),
            ("fresh", fresh),
            ("copy_left", copy_left),
            ("copy_right", copy_right),
        ):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_probes(self) -> int:
        return self.fresh.shape[0]


def gap_decay(gaps: np.ndarray, fragment_length: float) -> np.ndarray:
    """Distance decay applied to each inter-probe gap: 1 at gap 0, 0 at the
    full fragment length."""
    gaps = np.asarray(gaps, dtype=np.float64)
    over = np.flatnonzero(gaps > fragment_length)
    if over.size:
        m = int(over[0])
        raise ValidationError(
            f"gap {m} ({gaps[m]}) exceeds fragment_length {fragment_length}"
        )
    if np.any(gaps < 0):
        m = int(np.flatnonzero(gaps < 0)[0])
        raise ValidationError(f"gap {m} is negative ({gaps[m]})")
    return np.expm1(1.0 - gaps / fragment_length) / E_MINUS_ONE


def persistence_weights(xi, pos: np.ndarray, fragment_length: float) -> np.ndarray:
    """Adjacency score per gap: the distance-decayed fraction of samples whose
    state persists across it. Values lie in [0, 1]."""
    states = np.asarray(getattr(xi, "states", xi))
    pos = np.asarray(pos, dtype=np.float64)
    if pos.shape != (states.shape[1],):
        raise ValidationError(
            f"pos must have one coordinate per probe ({states.shape[1]}), got {pos.shape}"
        )
    decay = gap_decay(np.diff(pos), fragment_length)
    persist = (states[:, 1:] == states[:, :-1]).mean(axis=0)
    return decay * persist


def mixture_weights(s: np.ndarray, alpha: float) -> PersistenceWeights:
    """Build per-column weights from adjacency scores ``s`` (length M-1).

    Interior columns split mass as alpha : s_left : s_right. Boundary columns
    have no flank on one side, so their copy weights are zero and the fresh
    weight is one. An infinite ``alpha`` gives the spatially independent prior.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1:
        raise ValidationError(f"adjacency scores must be a vector, got ndim={s.ndim}")
    if np.any(~np.isfinite(s)) or np.any(s < 0) or np.any(s > 1):
        raise ValidationError("adjacency scores must lie in [0, 1]")
    n_probes = s.shape[0] + 1
    fresh = np.ones(n_probes)
    copy_left = np.zeros(n_probes)
    copy_right = np.zeros(n_probes)
    if not math.isinf(alpha) and n_probes > 2:
        s_left = s[:-1]
        s_right = s[1:]
        den = alpha + s_left + s_right
        fresh[1:-1] = alpha / den
        copy_left[1:-1] = s_left / den
        copy_right[1:-1] = s_right / den
    return PersistenceWeights(
        adjacency=s, fresh=fresh, copy_left=copy_left, copy_right=copy_right
    )


def site_inclusion_prob(
    r: int,
    left: int | None,
    right: int | None,
    fresh: float,
    copy_left: float,
    copy_right: float,
    incl_a: float,
    incl_b: float,
) -> float:
    """Probability of inclusion flag ``r`` at one site given its horizontal
    neighbors. ``left``/``right`` are None at the chromosome ends. The fresh
    component integrates the Beta hyperprior, leaving base odds a : b."""
    if r:
        p = fresh * (incl_a / (incl_a + incl_b))
    else:
        p = fresh * (incl_b / (incl_a + incl_b))
    if left is not None and left == r:
        p += copy_left
    if right is not None and right == r:
        p += copy_right
    return p


def site_inclusion_logprob(
    r: int,
    left: int | None,
    right: int | None,
    fresh: float,
    copy_left: float,
    copy_right: float,
    incl_a: float,
    incl_b: float,
) -> float:
    """Log of :func:`site_inclusion_prob`; zero probability maps to -inf."""
    p = site_inclusion_prob(r, left, right, fresh, copy_left, copy_right, incl_a, incl_b)
    return math.log(p) if p > 0.0 else float("-inf")


def column_site_probs(
    assoc: np.ndarray,
    m: int,
    weights: PersistenceWeights,
    incl_a: float,
    incl_b: float,
) -> np.ndarray:
    """Site probabilities at column ``m`` for every gene, given its neighbor
    columns in ``assoc``."""
    assoc = np.asarray(getattr(assoc, "included", assoc))
    n_probes = assoc.shape[1]
    r = assoc[:, m]
    base1 = incl_a / (incl_a + incl_b)
    base0 = incl_b / (incl_a + incl_b)
    p = weights.fresh[m] * np.where(r == 1, base1, base0)
    if m > 0:
        p = p + weights.copy_left[m] * (assoc[:, m - 1] == r)
    if m < n_probes - 1:
        p = p + weights.copy_right[m] * (assoc[:, m + 1] == r)
    return p


def log_assoc_prior(
    assoc,
    xi,
    pos: np.ndarray,
    fragment_length: float,
    hyper: RegressionHyper,
) -> float:
    """Log pseudo-likelihood of the whole inclusion matrix given the states."""
    inc = np.asarray(getattr(assoc, "included", assoc))
    s = persistence_weights(xi, pos, fragment_length)
    weights = mixture_weights(s, hyper.alpha)
    base1 = hyper.incl_a / (hyper.incl_a + hyper.incl_b)
    base0 = hyper.incl_b / (hyper.incl_a + hyper.incl_b)
    p = weights.fresh[None, :] * np.where(inc == 1, base1, base0)
    p = p.copy()
    p[:, 1:] += weights.copy_left[None, 1:] * (inc[:, 1:] == inc[:, :-1])
    p[:, :-1] += weights.copy_right[None, :-1] * (inc[:, :-1] == inc[:, 1:])
    if np.any(p <= 0.0):
        return float("-inf")
    return float(np.log(p).sum())


def _robert_tail(low: float, rng: np.random.Generator) -> float:
    """Rejection sampler for a standard normal conditioned on exceeding
    ``low`` >= 0, using a shifted-exponential envelope."""
    lam = 0.5 * (low + math.sqrt(low * low + 4.0))
    while True:
        x = low - math.log1p(-rng.random()) / lam
        diff = x - lam
        if rng.random() <= math.exp(-0.5 * diff * diff):
            return x


def _log_interval_mass(a: float, b: float) -> float:
    """log(Phi(b) - Phi(a)) for standardized bounds a < b, cancellation-safe."""
    if a == -math.inf and b == math.inf:
        return 0.0
    if a == -math.inf:
        return float(log_ndtr(b))
    if b == math.inf:
        return float(log_ndtr(-a))
    if a >= 0.0:
        la = float(log_ndtr(-a))
        lb = float(log_ndtr(-b))
        return la + math.log1p(-math.exp(lb - la)) if lb < la else float("-inf")
    if b <= 0.0:
        lb = float(log_ndtr(b))
        la = float(log_ndtr(a))
        return lb + math.log1p(-math.exp(la - lb)) if la < lb else float("-inf")
    mass = float(ndtr(b) - ndtr(a))
    return math.log(mass) if mass > 0.0 else float("-inf")


def _sample_std_truncnorm(a: float, b: float, rng: np.random.Generator) -> float:
    """Standard normal restricted to (a, b). Far upper tails use rejection;
    everything else inverts the CDF on the better-conditioned side."""
    if a == -math.inf and b == math.inf:
        return float(rng.standard_normal())
    if a >= 0.0:
        if b == math.inf and a >= 5.0:
            return _robert_tail(a, rng)
        hi = float(ndtr(-a))
        lo = 0.0 if b == math.inf else float(ndtr(-b))
        while True:
            u = lo + (hi - lo) * rng.random()
            z = -float(ndtri(u))
            if math.isfinite(z):
                return z
    if b <= 0.0:
        return -_sample_std_truncnorm(-b, -a, rng)
    lo = float(ndtr(a))
    hi = 1.0 if b == math.inf else float(ndtr(b))
    while True:
        u = lo + (hi - lo) * rng.random()
        z = float(ndtri(u))
        if math.isfinite(z):
            return z


def sample_truncated_normal(
    mean: float,
    sd: float,
    low: float,
    high: float,
    rng: np.random.Generator,
) -> float:
    """Draw from N(mean, sd^2) restricted to the open interval (low, high)."""
    if not (sd > 0 and math.isfinite(sd)):
        raise ValidationError(f"sd must be positive and finite, got {sd}")
    if not math.isfinite(mean):
        raise ValidationError(f"mean must be finite, got {mean}")
    if not low < high:
        raise ValidationError(f"need low < high, got ({low}, {high})")
    a = (low - mean) / sd
    b = (high - mean) / sd
    if _log_interval_mass(a, b) < LOG_TINY:
        raise ValidationError(
            f"degenerate truncation: interval ({low}, {high}) carries no mass "
            f"under N({mean}, {sd}^2)"
        )
    x = mean + sd * _sample_std_truncnorm(a, b, rng)
    if x <= low:
        x = math.nextafter(low, high)
    elif x >= high:
        x = math.nextafter(high, low)
    return float(x)


def sample_truncated_gamma(
    shape: float,
    rate: float,
    lower_bound: float,
    rng: np.random.Generator,
) -> float:
    """Gamma(shape, rate) draw conditioned to exceed ``lower_bound``.

    Inverts the upper-tail CDF so the conditioning stays exact even when the
    bound sits far into the tail.
    """
    if not (shape > 0 and rate > 0):
        raise ValidationError(f"shape and rate must be positive, got ({shape}, {rate})")
    if not (lower_bound >= 0 and math.isfinite(lower_bound)):
        raise ValidationError(f"lower_bound must be finite and >= 0, got {lower_bound}")
    if lower_bound == 0.0:
        return float(rng.gamma(shape, 1.0 / rate))
    tail = float(gammaincc(shape, rate * lower_bound))
    if tail <= 1e-300:
        raise ValidationError(
            f"degenerate truncation: bound {lower_bound} leaves tail mass {tail}"
        )
    # u in (0, tail], avoiding the u=0 endpoint whose inverse is infinite
    u = tail * (1.0 - rng.random())
    x = float(gammainccinv(shape, u)) / rate
    if x <= lower_bound:
        x = math.nextafter(lower_bound, math.inf)
    return x


def truncated_normal_logpdf(
    x: float, mean: float, sd: float, low: float, high: float
) -> float:
    """Log density of the truncated normal at ``x`` (open-interval support)."""
    if not low < high:
        raise ValidationError(f"need low < high, got ({low}, {high})")
    if x <= low or x >= high:
        return float("-inf")
    z = (x - mean) / sd
    logmass = _log_interval_mass((low - mean) / sd, (high - mean) / sd)
    return -0.5 * z * z - math.log(sd) - 0.5 * math.log(2.0 * math.pi) - logmass


def truncated_gamma_logpdf(
    x: float, shape: float, rate: float, lower_bound: float
) -> float:
    """Log density at ``x`` of Gamma(shape, rate) conditioned above ``lower_bound``."""
    if x <= lower_bound or x <= 0.0:
        return float("-inf")
    logpdf = (
        shape * math.log(rate)
        - float(gammaln(shape))
        + (shape - 1.0) * math.log(x)
        - rate * x
    )
    if lower_bound > 0.0:
        tail = float(gammaincc(shape, rate * lower_bound))
        if tail <= 0.0:
            return float("-inf")
        logpdf -= math.log(tail)
    return logpdf


def dirichlet_logpdf(x: np.ndarray, conc: np.ndarray) -> float:
    """Log density of a Dirichlet law at a probability vector."""
    x = np.asarray(x, dtype=np.float64)
    conc = np.asarray(conc, dtype=np.float64)
    if np.any(x <= 0.0):
        return float("-inf")
    return float(
        gammaln(conc.sum()) - gammaln(conc).sum() + ((conc - 1.0) * np.log(x)).sum()
    )
