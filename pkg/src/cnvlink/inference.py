"""Posterior summarization: inclusion probabilities, Bayesian FDR selection,
q-values, modal state calls, and parameter point estimates.

All functions are pure maps over a retained trace. Selection controls the
Bayesian FDR: with lambda = 1 - PPI, the realized FDR of the set
{lambda <= k} is the mean lambda inside the set, and the selection threshold
is the largest candidate k whose realized FDR stays within the target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ValidationError

_MODAL_PRIORITY = (1, 0, 2, 3)
_MODAL_STATES = (2, 1, 3, 4)


def _check_trace(trace) -> None:
    if getattr(trace, "n_kept", 0) < 1:
        raise ValidationError("trace holds no retained samples")


def ppi(trace) -> np.ndarray:
    """Per-entry inclusion frequency over the retained samples."""
    _check_trace(trace)
    return trace.assoc_counts / float(trace.n_kept)


def _sorted_fdr(flat: np.ndarray):
    """Ascending lambdas with, per position, the running-mean FDR of the set
    that includes the position's whole tie group."""
    order = np.argsort(flat, kind="stable")
    lam = flat[order]
    n = lam.size
    cum = np.cumsum(lam) / np.arange(1, n + 1)
    last = np.empty(n, dtype=bool)
    last[-1] = True
    np.not_equal(lam[1:], lam[:-1], out=last[:-1])
    last_idx = np.flatnonzero(last)
    group = np.searchsorted(last_idx, np.arange(n), side="left")
    return order, lam, cum, last_idx, cum[last_idx[group]]


def bfdr_select(ppi_matrix: np.ndarray, target_fdr: float = 0.05):
    """Largest-threshold Bayesian FDR selection.

    Returns ``(threshold, selected, realized_fdr)`` where ``selected`` marks
    entries with ``1 - PPI <= threshold``. An empty selection is reported with
    threshold -1.0 and realized FDR 0.0.
    """
    ppi_matrix = np.asarray(ppi_matrix, dtype=np.float64)
    if not (0.0 < target_fdr < 1.0):
        raise ValidationError(f"target_fdr must lie in (0, 1), got {target_fdr}")
    if np.any(ppi_matrix < 0.0) or np.any(ppi_matrix > 1.0):
        raise ValidationError("PPI values must lie in [0, 1]")
    flat = (1.0 - ppi_matrix).ravel()
    _, lam, cum, last_idx, _ = _sorted_fdr(flat)
    fdr_at_candidate = cum[last_idx]
    ok = np.flatnonzero(fdr_at_candidate <= target_fdr)
    if ok.size == 0:
        return -1.0, np.zeros(ppi_matrix.shape, dtype=np.int8), 0.0
    pick = int(ok[-1])
    threshold = float(lam[last_idx[pick]])
    realized = float(fdr_at_candidate[pick])
    selected = ((1.0 - ppi_matrix) <= threshold).astype(np.int8)
    return threshold, selected, realized


def q_values(ppi_matrix: np.ndarray) -> np.ndarray:
    """Smallest realized FDR at which each entry enters the selection."""
    ppi_matrix = np.asarray(ppi_matrix, dtype=np.float64)
    flat = (1.0 - ppi_matrix).ravel()
    order, _, _, _, group_fdr = _sorted_fdr(flat)
    q_sorted = np.minimum.accumulate(group_fdr[::-1])[::-1]
    out = np.empty_like(flat)
    out[order] = q_sorted
    return out.reshape(ppi_matrix.shape)


def modal_states(trace) -> np.ndarray:
    """Most frequent state per cell; ties prefer the more neutral state, then
    the smaller state index."""
    _check_trace(trace)
    reordered = trace.state_counts[:, :, list(_MODAL_PRIORITY)]
    winner = np.argmax(reordered, axis=2)
    return np.asarray(_MODAL_STATES, dtype=np.int8)[winner]


def posterior_point_estimates(trace):
    """Posterior-mean parameter estimates; transition rows renormalized."""
    _check_trace(trace)
    means_est = trace.means_samples.mean(axis=0)
    sds_est = trace.sds_samples.mean(axis=0)
    trans_est = trace.trans_samples.mean(axis=0)
    trans_est = trans_est / trans_est.sum(axis=1, keepdims=True)
    return means_est, sds_est, trans_est


@dataclass(frozen=True)
class PosteriorSummary:
    """Everything a report needs from one chain."""

    ppi: np.ndarray
    selected: np.ndarray
    threshold: float
    realized_fdr: float
    fdr_target: float
    q_values: np.ndarray
    state_modes: np.ndarray
    means_est: np.ndarray
    sds_est: np.ndarray
    trans_est: np.ndarray

    def __post_init__(self) -> None:
        expect = ((1.0 - self.ppi) <= self.threshold).astype(np.int8)
        if not np.array_equal(expect, self.selected):
            raise ValidationError("selection set does not match its threshold")
        if np.any(self.q_values < 0.0) or np.any(self.q_values > 1.0):
            raise ValidationError("q-values must lie in [0, 1]")


def summarize(trace, fdr_target: float = 0.05) -> PosteriorSummary:
    """Full posterior summary of a retained trace."""
    probs = ppi(trace)
    threshold, selected, realized = bfdr_select(probs, fdr_target)
    means_est, sds_est, trans_est = posterior_point_estimates(trace)
    return PosteriorSummary(
        ppi=probs,
        selected=selected,
        threshold=threshold,
        realized_fdr=realized,
        fdr_target=fdr_target,
        q_values=q_values(probs),
        state_modes=modal_states(trace),
        means_est=means_est,
        sds_est=sds_est,
        trans_est=trans_est,
    )
