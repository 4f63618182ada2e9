"""Five-move MCMC kernel and chain driver.

One sweep updates, in order: the inclusion matrix (Metropolis add/delete/swap
per selected gene), one column of the state matrix (element-wise Metropolis on
a random subset of rows), the emission means (Gibbs), the emission sds
(Gibbs), and the transition matrix (joint Metropolis from a Dirichlet
proposal).

Reproducibility contract: a chain consumes a single PCG64 stream seeded from
``cfg.seed``. Every update draws in a fixed documented order, so identical
inputs and seed give bit-identical traces. When an element-wise state proposal
equals the current state it is accepted without consuming an acceptance
uniform.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .likelihood import (
    collapsed_loglik_from_parts,
    log_emission,
    log_state_prior,
    precompute_responses,
    stationary_distribution,
)
from .model import (
    N_STATES,
    NEUTRAL,
    STATE_NAMES,
    NumericalError,
    ValidatedContext,
    ValidationError,
)
from .priors import (
    dirichlet_logpdf,
    gap_decay,
    log_assoc_prior,
    mixture_weights,
    sample_truncated_gamma,
    sample_truncated_normal,
    site_inclusion_prob,
    truncated_gamma_logpdf,
    truncated_normal_logpdf,
)

#: Log-ratio cutoffs mapping raw measurements to initial states 1..4.
INIT_THRESHOLDS = (-math.inf, -0.5, 0.29, 0.79)

LOG_TWO_PI = math.log(2.0 * math.pi)


@dataclass
class ChainState:
    """Mutable sampler state. ``gene_loglik`` caches each gene's collapsed
    marginal log likelihood; ``persist_counts[t]`` counts rows whose state
    persists across gap t. Both caches are maintained incrementally and
    checked against fresh evaluation in debug sweeps."""

    assoc: np.ndarray
    states: np.ndarray
    trans: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    stat_dist: np.ndarray
    gene_loglik: np.ndarray
    persist_counts: np.ndarray
    iteration: int = 0


@dataclass
class AcceptanceStats:
    """Per-move proposal and acceptance counters."""

    add_proposed: int = 0
    add_accepted: int = 0
    delete_proposed: int = 0
    delete_accepted: int = 0
    swap_proposed: int = 0
    swap_accepted: int = 0
    assoc_noop: int = 0
    state_proposed: int = 0
    state_accepted: int = 0
    trans_proposed: int = 0
    trans_accepted: int = 0
    trans_degenerate: int = 0

    def as_dict(self) -> dict[str, int]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, int]) -> "AcceptanceStats":
        return cls(**{k: int(v) for k, v in d.items()})

    def rates(self) -> dict[str, float]:
        def rate(acc: int, prop: int) -> float:
            return acc / prop if prop else float("nan")

        return {
            "add": rate(self.add_accepted, self.add_proposed),
            "delete": rate(self.delete_accepted, self.delete_proposed),
            "swap": rate(self.swap_accepted, self.swap_proposed),
            "state": rate(self.state_accepted, self.state_proposed),
            "trans": rate(self.trans_accepted, self.trans_proposed),
        }


@dataclass(frozen=True)
class ChainTrace:
    """Retained post-burn-in samples in summarized form.

    Inclusions and states are stored as per-cell counts over the retained
    samples; emission and transition parameters are stored per sample. Scalar
    series suitable for diagnostics come from :meth:`scalar_series`.
    """

    assoc_counts: np.ndarray
    state_counts: np.ndarray
    means_samples: np.ndarray
    sds_samples: np.ndarray
    trans_samples: np.ndarray
    assoc_size: np.ndarray
    occupancy: np.ndarray
    log_posterior: np.ndarray
    n_kept: int
    iterations: int
    burn_in: int
    thin: int
    seed: int
    acceptance: dict

    def __post_init__(self) -> None:
        if self.n_kept < 1:
            raise ValidationError("trace must retain at least one sample")
        totals = self.state_counts.sum(axis=2)
        if not np.all(totals == self.n_kept):
            raise ValidationError("state counts do not total the retained sample count")
        if np.any(self.assoc_counts < 0) or np.any(self.assoc_counts > self.n_kept):
            raise ValidationError("inclusion counts outside [0, n_kept]")

    @property
    def n_samples(self) -> int:
        return self.state_counts.shape[0]

    @property
    def n_genes(self) -> int:
        return self.assoc_counts.shape[0]

    @property
    def n_probes(self) -> int:
        return self.assoc_counts.shape[1]

    def scalar_series(self) -> dict[str, np.ndarray]:
        """Named scalar series, one value per retained sample."""
        out: dict[str, np.ndarray] = {"assoc_size": self.assoc_size.astype(np.float64)}
        for j, name in enumerate(STATE_NAMES):
            out[f"occupancy_{name}"] = self.occupancy[:, j].astype(np.float64)
        for j, name in enumerate(STATE_NAMES):
            out[f"mean_{name}"] = self.means_samples[:, j]
        for j, name in enumerate(STATE_NAMES):
            out[f"sd_{name}"] = self.sds_samples[:, j]
        out["log_posterior"] = self.log_posterior
        return out


@dataclass
class Checkpoint:
    """Complete resumable snapshot taken between sweeps: sampler state, RNG
    state, trace accumulators, and the run coordinates they belong to."""

    iteration: int
    iterations: int
    burn_in: int
    thin: int
    seed: int
    assoc: np.ndarray
    states: np.ndarray
    trans: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    stat_dist: np.ndarray
    gene_loglik: np.ndarray
    persist_counts: np.ndarray
    rng_state: dict
    kept: int
    assoc_counts: np.ndarray
    state_counts: np.ndarray
    means_samples: np.ndarray
    sds_samples: np.ndarray
    trans_samples: np.ndarray
    assoc_size: np.ndarray
    occupancy: np.ndarray
    log_posterior: np.ndarray
    stats: dict


def _trunc_geometric(rng: np.random.Generator, p: float, cap: int) -> int:
    """Geometric(p) on {1, 2, ...}, redrawn until the value is <= cap."""
    while True:
        k = int(rng.geometric(p))
        if k <= cap:
            return k


class _TraceBuilder:
    def __init__(self, n: int, n_genes: int, n_probes: int, n_kept: int) -> None:
        self.assoc_counts = np.zeros((n_genes, n_probes), dtype=np.int64)
        self.state_counts_flat = np.zeros(n * n_probes * N_STATES, dtype=np.int64)
        self._cell_base = np.arange(n * n_probes, dtype=np.int64) * N_STATES
        self.means = np.empty((n_kept, N_STATES))
        self.sds = np.empty((n_kept, N_STATES))
        self.trans = np.empty((n_kept, N_STATES, N_STATES))
        self.assoc_size = np.empty(n_kept, dtype=np.int64)
        self.occupancy = np.empty((n_kept, N_STATES), dtype=np.int64)
        self.log_posterior = np.empty(n_kept)
        self.kept = 0
        self._shape = (n, n_probes)

    def add(self, state: ChainState, log_post: float) -> None:
        k = self.kept
        self.assoc_counts += state.assoc
        flat = state.states.ravel().astype(np.int64) - 1
        self.state_counts_flat[self._cell_base + flat] += 1
        self.means[k] = state.means
        self.sds[k] = state.sds
        self.trans[k] = state.trans
        self.assoc_size[k] = int(state.assoc.sum())
        self.occupancy[k] = np.bincount(flat, minlength=N_STATES)
        self.log_posterior[k] = log_post
        self.kept = k + 1

    def to_trace(self, cfg, stats: AcceptanceStats) -> ChainTrace:
        n, n_probes = self._shape
        return ChainTrace(
            assoc_counts=self.assoc_counts,
            state_counts=self.state_counts_flat.reshape(n, n_probes, N_STATES),
            means_samples=self.means[: self.kept],
            sds_samples=self.sds[: self.kept],
            trans_samples=self.trans[: self.kept],
            assoc_size=self.assoc_size[: self.kept],
            occupancy=self.occupancy[: self.kept],
            log_posterior=self.log_posterior[: self.kept],
            n_kept=self.kept,
            iterations=cfg.iterations,
            burn_in=cfg.burn_in,
            thin=cfg.thin,
            seed=cfg.seed,
            acceptance=stats.as_dict(),
        )


class Kernel:
    """The move implementations, bound to one validated problem instance.

    Methods mutate a :class:`ChainState` in place and tally into
    :attr:`stats`. All randomness flows through the generator argument.
    """

    def __init__(self, ctx: ValidatedContext) -> None:
        if ctx.hyper.resid_scale is None:
            raise ValidationError("context has unresolved resid_scale; use validate()")
        self.ctx = ctx
        data = ctx.data
        self.y = data.y
        self.x = data.x
        self.pos = data.pos
        self.fragment_length = data.fragment_length
        self.n = data.n_samples
        self.n_genes = data.n_genes
        self.n_probes = data.n_probes
        self.hyper = ctx.hyper
        self.hmm_hyper = ctx.hmm_hyper
        self.cfg = ctx.cfg
        pre = precompute_responses(self.y, self.hyper.intercept_prec)
        self.swept_y = pre.swept
        self.quad_y = pre.quad
        gaps = np.diff(self.pos)
        over = np.flatnonzero(gaps > self.fragment_length)
        if over.size:
            raise ValidationError(
                f"gap {int(over[0])} exceeds fragment_length {self.fragment_length}"
            )
        self.gap_decay = gap_decay(gaps, self.fragment_length)
        self.mask_limit = self.n * self.cfg.neutral_mask_frac
        self.base1 = self.hyper.incl_a / (self.hyper.incl_a + self.hyper.incl_b)
        self.base0 = self.hyper.incl_b / (self.hyper.incl_a + self.hyper.incl_b)
        self.stats = AcceptanceStats()

    # ---------------- initialization ----------------

    def init_state(self, rng: np.random.Generator) -> ChainState:
        """Deterministic threshold states and count-smoothed transitions;
        emission parameters drawn from their priors (sds first, then means in
        state order so the top state's floor can see the gain parameters)."""
        x = self.x
        states = np.ones(x.shape, dtype=np.int8)
        for t in INIT_THRESHOLDS[1:]:
            states += (x > t).astype(np.int8)
        trans = self._smoothed_transition_counts(states)
        stat_dist = stationary_distribution(trans)
        hh = self.hmm_hyper
        sds = np.empty(N_STATES)
        for j in range(N_STATES):
            prec = sample_truncated_gamma(
                hh.prec_shape[j], hh.prec_rate[j], hh.sd_cap[j] ** -2, rng
            )
            sds[j] = prec ** -0.5
        means = np.empty(N_STATES)
        for j in range(N_STATES):
            low = hh.eta_low[j]
            if j == N_STATES - 1 and hh.amp_floor_tracks_gain:
                low = max(low, means[j - 1] + sds[j - 1])
            means[j] = sample_truncated_normal(
                hh.eta_loc[j], hh.eta_scale[j], low, hh.eta_high[j], rng
            )
        assoc = np.zeros((self.n_genes, self.n_probes), dtype=np.int8)
        empty = np.empty((self.n, 0))
        base_ll = np.array([
            collapsed_loglik_from_parts(empty, self.swept_y[:, g], float(self.quad_y[g]), self.hyper)
            for g in range(self.n_genes)
        ])
        persist = (states[:, 1:] == states[:, :-1]).sum(axis=0).astype(np.int64)
        return ChainState(
            assoc=assoc,
            states=states,
            trans=trans,
            means=means,
            sds=sds,
            stat_dist=np.asarray(stat_dist),
            gene_loglik=base_ll,
            persist_counts=persist,
            iteration=0,
        )

    def _smoothed_transition_counts(self, states: np.ndarray) -> np.ndarray:
        codes = (states[:, :-1].astype(np.int64) - 1) * N_STATES + (
            states[:, 1:].astype(np.int64) - 1
        )
        counts = np.bincount(codes.ravel(), minlength=N_STATES * N_STATES).reshape(
            N_STATES, N_STATES
        )
        conc = np.asarray(self.hmm_hyper.trans_conc)
        smoothed = counts + conc[None, :]
        return smoothed / smoothed.sum(axis=1, keepdims=True)

    # ---------------- cached-quantity helpers ----------------

    def _gene_loglik(self, g: int, r_row: np.ndarray, states: np.ndarray) -> float:
        sel = np.flatnonzero(r_row)
        z = states[:, sel].astype(np.float64)
        return collapsed_loglik_from_parts(
            z, self.swept_y[:, g], float(self.quad_y[g]), self.hyper
        )

    def _adjacency(self, persist_counts: np.ndarray) -> np.ndarray:
        return self.gap_decay * (persist_counts / self.n)

    def _column_logprob_sum(
        self, assoc: np.ndarray, c: int, fresh: float, copy_left: float, copy_right: float
    ) -> float:
        r = assoc[:, c]
        p = fresh * np.where(r == 1, self.base1, self.base0)
        if c > 0:
            p = p + copy_left * (assoc[:, c - 1] == r)
        if c < self.n_probes - 1:
            p = p + copy_right * (assoc[:, c + 1] == r)
        return float(np.log(p).sum())

    def _gene_sites_logprob(self, row: np.ndarray, cols, weights) -> float:
        total = 0.0
        last = self.n_probes - 1
        for c in cols:
            left = int(row[c - 1]) if c > 0 else None
            right = int(row[c + 1]) if c < last else None
            p = site_inclusion_prob(
                int(row[c]), left, right,
                float(weights.fresh[c]), float(weights.copy_left[c]),
                float(weights.copy_right[c]),
                self.hyper.incl_a, self.hyper.incl_b,
            )
            total += math.log(p)
        return total

    # ---------------- move 1: inclusion matrix ----------------

    def update_assoc(self, state: ChainState, rng: np.random.Generator) -> None:
        """Metropolis add/delete/swap on a geometric number of genes.

        Columns neutral in more than the configured fraction of samples are
        masked out of selection; entries already included stay deletable (and
        swappable away) even when masked, so no inclusion can get stuck.
        """
        cfg = self.cfg
        stats = self.stats
        neutral_counts = (state.states == NEUTRAL).sum(axis=0)
        unmasked = neutral_counts <= self.mask_limit
        weights = mixture_weights(self._adjacency(state.persist_counts), self.hyper.alpha)
        n_g = _trunc_geometric(rng, cfg.gene_block_p, self.n_genes)
        genes = rng.choice(self.n_genes, size=n_g, replace=False)
        for g in genes:
            row = state.assoc[g]
            if rng.random() < cfg.flip_prob:
                cand = np.flatnonzero(unmasked | (row == 1))
                if cand.size == 0:
                    stats.assoc_noop += 1
                    continue
                m = int(cand[rng.integers(cand.size)])
                changed = ((m, 1 - int(row[m])),)
                move = "add" if row[m] == 0 else "delete"
            else:
                included = np.flatnonzero(row == 1)
                excluded = np.flatnonzero((row == 0) & unmasked)
                if included.size == 0 or excluded.size == 0:
                    stats.assoc_noop += 1
                    continue
                m_out = int(included[rng.integers(included.size)])
                m_in = int(excluded[rng.integers(excluded.size)])
                changed = ((m_out, 0), (m_in, 1))
                move = "swap"
            new_row = row.copy()
            for c, v in changed:
                new_row[c] = v
            new_ll = self._gene_loglik(g, new_row, state.states)
            affected = sorted(
                {cc for c, _ in changed for cc in (c - 1, c, c + 1) if 0 <= cc < self.n_probes}
            )
            old_lp = self._gene_sites_logprob(row, affected, weights)
            new_lp = self._gene_sites_logprob(new_row, affected, weights)
            total = (new_ll - float(state.gene_loglik[g])) + (new_lp - old_lp)
            setattr(stats, f"{move}_proposed", getattr(stats, f"{move}_proposed") + 1)
            if math.log(rng.random() or 5e-324) < total:
                state.assoc[g] = new_row
                state.gene_loglik[g] = new_ll
                setattr(stats, f"{move}_accepted", getattr(stats, f"{move}_accepted") + 1)

    # ---------------- move 2: state matrix column ----------------

    def update_states(self, state: ChainState, rng: np.random.Generator) -> None:
        """Element-wise Metropolis on one uniformly chosen column.

        Proposals come from the left neighbor's transition row (stationary law
        at the first column). Each element's acceptance ratio multiplies the
        outcome-likelihood ratio over genes selecting this column, the
        emission ratio, the Markov ratio for both adjacent transitions, the
        selection-prior ratio from persistence changes at this column and its
        neighbors, and the proposal ratio. Elements are processed
        sequentially, so later ones see earlier acceptances.
        """
        stats = self.stats
        m = int(rng.integers(self.n_probes))
        n_m = _trunc_geometric(rng, self.cfg.row_block_p, self.n)
        rows = rng.choice(self.n, size=n_m, replace=False)
        genes_sel = np.flatnonzero(state.assoc[:, m] == 1)
        with np.errstate(divide="ignore"):
            log_trans = np.log(state.trans)
            log_stat = np.log(state.stat_dist)
        cum_trans = np.cumsum(state.trans, axis=1)
        cum_stat = np.cumsum(state.stat_dist)
        x_col = self.x[:, m]
        means = state.means
        sds = state.sds
        last = self.n_probes - 1
        local_prior = not math.isinf(self.hyper.alpha) and self.n_probes > 2
        for i in rows:
            i = int(i)
            old = int(state.states[i, m])
            if m == 0:
                cum = cum_stat
                prop_row = state.stat_dist
            else:
                left = int(state.states[i, m - 1])
                cum = cum_trans[left - 1]
                prop_row = state.trans[left - 1]
            u = rng.random()
            new = int(np.searchsorted(cum, u, side="right"))
            if new >= N_STATES:
                new = N_STATES - 1
            new += 1
            stats.state_proposed += 1
            if new == old:
                stats.state_accepted += 1
                continue
            # emission ratio
            zo = (x_col[i] - means[old - 1]) / sds[old - 1]
            zn = (x_col[i] - means[new - 1]) / sds[new - 1]
            total = (-0.5 * zn * zn - math.log(sds[new - 1])) - (
                -0.5 * zo * zo - math.log(sds[old - 1])
            )
            # Markov ratio: incoming transition (or initial law) and outgoing
            if m == 0:
                total += float(log_stat[new - 1] - log_stat[old - 1])
            else:
                total += float(log_trans[left - 1, new - 1] - log_trans[left - 1, old - 1])
            if m < last:
                right = int(state.states[i, m + 1])
                total += float(log_trans[new - 1, right - 1] - log_trans[old - 1, right - 1])
            # proposal ratio: reverse over forward, same conditioning row
            total += float(np.log(prop_row[old - 1]) - np.log(prop_row[new - 1]))
            # selection-prior ratio from persistence changes
            delta_left = 0
            delta_right = 0
            if m > 0:
                lv = int(state.states[i, m - 1])
                delta_left = int(lv == new) - int(lv == old)
            if m < last:
                rv = int(state.states[i, m + 1])
                delta_right = int(rv == new) - int(rv == old)
            if local_prior and (delta_left or delta_right):
                total += self._weight_delta_logp(state, m, delta_left, delta_right)
            # outcome-likelihood ratio, via tentative mutation
            state.states[i, m] = new
            new_lls = None
            if genes_sel.size:
                new_lls = np.array([
                    self._gene_loglik(g, state.assoc[g], state.states) for g in genes_sel
                ])
                total += float(np.sum(new_lls - state.gene_loglik[genes_sel]))
            if math.log(rng.random() or 5e-324) < total:
                stats.state_accepted += 1
                if m > 0:
                    state.persist_counts[m - 1] += delta_left
                if m < last:
                    state.persist_counts[m] += delta_right
                if new_lls is not None:
                    state.gene_loglik[genes_sel] = new_lls
            else:
                state.states[i, m] = old

    def _weight_delta_logp(
        self, state: ChainState, m: int, delta_left: int, delta_right: int
    ) -> float:
        """Change in the selection prior's log value, summed over all genes,
        when the persistence counts at the gaps flanking column m shift."""
        alpha = self.hyper.alpha
        pc = state.persist_counts
        n = self.n
        last = self.n_probes - 1

        def s_at(gap: int, shifted: bool) -> float:
            count = int(pc[gap])
            if shifted:
                if gap == m - 1:
                    count += delta_left
                elif gap == m:
                    count += delta_right
            return float(self.gap_decay[gap]) * (count / n)

        total = 0.0
        for c in (m - 1, m, m + 1):
            if c < 1 or c > last - 1:
                continue
            sl_old = s_at(c - 1, False)
            sr_old = s_at(c, False)
            sl_new = s_at(c - 1, True)
            sr_new = s_at(c, True)
            if sl_old == sl_new and sr_old == sr_new:
                continue
            den_old = alpha + sl_old + sr_old
            den_new = alpha + sl_new + sr_new
            total += self._column_logprob_sum(
                state.assoc, c, alpha / den_new, sl_new / den_new, sr_new / den_new
            ) - self._column_logprob_sum(
                state.assoc, c, alpha / den_old, sl_old / den_old, sr_old / den_old
            )
        return total

    # ---------------- moves 3 and 4: emission parameters ----------------

    def update_means(self, state: ChainState, rng: np.random.Generator) -> None:
        """Gibbs update of each state's emission mean from its truncated
        normal conditional; a state with no occupied cells draws from its
        prior. The top state's lower bound tracks gain mean + gain sd when
        configured, keeping single and multiple gains separated."""
        hh = self.hmm_hyper
        flat = state.states.ravel().astype(np.int64) - 1
        counts = np.bincount(flat, minlength=N_STATES)
        sums = np.bincount(flat, weights=self.x.ravel(), minlength=N_STATES)
        for j in range(N_STATES):
            low = float(hh.eta_low[j])
            high = float(hh.eta_high[j])
            if j == N_STATES - 1 and hh.amp_floor_tracks_gain:
                low = max(low, float(state.means[j - 1] + state.sds[j - 1]))
            if counts[j] == 0:
                loc = float(hh.eta_loc[j])
                scale = float(hh.eta_scale[j])
            else:
                prior_prec = float(hh.eta_scale[j]) ** -2
                like_prec = counts[j] * float(state.sds[j]) ** -2
                post_prec = prior_prec + like_prec
                loc = (float(hh.eta_loc[j]) * prior_prec + sums[j] * float(state.sds[j]) ** -2) / post_prec
                scale = post_prec ** -0.5
            state.means[j] = sample_truncated_normal(loc, scale, low, high, rng)

    def update_sds(self, state: ChainState, rng: np.random.Generator) -> None:
        """Gibbs update of each state's emission precision from its truncated
        gamma conditional (empty states draw from the prior)."""
        hh = self.hmm_hyper
        flat = state.states.ravel().astype(np.int64) - 1
        counts = np.bincount(flat, minlength=N_STATES)
        resid2 = np.square(self.x.ravel() - state.means[flat])
        ssq = np.bincount(flat, weights=resid2, minlength=N_STATES)
        for j in range(N_STATES):
            shape = float(hh.prec_shape[j]) + 0.5 * counts[j]
            rate = float(hh.prec_rate[j]) + 0.5 * ssq[j]
            prec = sample_truncated_gamma(shape, rate, float(hh.sd_cap[j]) ** -2, rng)
            state.sds[j] = prec ** -0.5

    # ---------------- move 5: transition matrix ----------------

    def update_trans(self, state: ChainState, rng: np.random.Generator) -> None:
        """Propose all four rows from their conjugate Dirichlet conditionals
        and accept or reject the matrix as a whole; only the stationary law's
        hold on the first column enters the ratio (the Dirichlet terms
        cancel against the proposal)."""
        stats = self.stats
        conc = np.asarray(self.hmm_hyper.trans_conc)
        codes = (state.states[:, :-1].astype(np.int64) - 1) * N_STATES + (
            state.states[:, 1:].astype(np.int64) - 1
        )
        counts = np.bincount(codes.ravel(), minlength=N_STATES * N_STATES).reshape(
            N_STATES, N_STATES
        )
        proposal = np.empty((N_STATES, N_STATES))
        for h in range(N_STATES):
            proposal[h] = rng.dirichlet(conc + counts[h])
        stats.trans_proposed += 1
        if np.any(proposal <= 0.0) or np.any(~np.isfinite(proposal)):
            stats.trans_degenerate += 1
            return
        try:
            new_stat = stationary_distribution(proposal)
        except NumericalError:
            stats.trans_degenerate += 1
            return
        if np.any(new_stat <= 0.0):
            stats.trans_degenerate += 1
            return
        first_counts = np.bincount(
            state.states[:, 0].astype(np.int64) - 1, minlength=N_STATES
        )
        log_ratio = float(
            np.sum(first_counts * (np.log(new_stat) - np.log(state.stat_dist)))
        )
        if math.log(rng.random() or 5e-324) < log_ratio:
            state.trans = proposal
            state.stat_dist = np.asarray(new_stat)
            stats.trans_accepted += 1

    # ---------------- bookkeeping ----------------

    def log_posterior(self, state: ChainState) -> float:
        """Unnormalized joint log density of the current state, for trace
        monitoring. Uses the cached gene likelihoods and the static mean
        bounds (the dynamic top-state floor is a sampling constraint whose
        transient violations should not blank the monitor)."""
        hh = self.hmm_hyper
        total = float(state.gene_loglik.sum())
        total += log_assoc_prior(
            state.assoc, state.states, self.pos, self.fragment_length, self.hyper
        )
        total += log_state_prior(state.states, state.trans, state.stat_dist)
        total += log_emission(self.x, state.states, state.means, state.sds)
        for j in range(N_STATES):
            total += truncated_normal_logpdf(
                float(state.means[j]), float(hh.eta_loc[j]), float(hh.eta_scale[j]),
                float(hh.eta_low[j]), float(hh.eta_high[j]),
            )
            total += truncated_gamma_logpdf(
                float(state.sds[j]) ** -2, float(hh.prec_shape[j]),
                float(hh.prec_rate[j]), float(hh.sd_cap[j]) ** -2,
            )
            total += dirichlet_logpdf(state.trans[j], np.asarray(hh.trans_conc))
        return total

    def check_coherence(self, state: ChainState) -> None:
        """Verify the incremental caches against fresh evaluation."""
        for g in range(self.n_genes):
            fresh = self._gene_loglik(g, state.assoc[g], state.states)
            if abs(fresh - float(state.gene_loglik[g])) > 1e-8:
                raise NumericalError(
                    f"cached log likelihood for gene {g} drifted: "
                    f"{state.gene_loglik[g]} vs fresh {fresh}"
                )
        persist = (state.states[:, 1:] == state.states[:, :-1]).sum(axis=0)
        if not np.array_equal(persist, state.persist_counts):
            raise NumericalError("cached persistence counts drifted")
        resid = float(np.max(np.abs(state.stat_dist @ state.trans - state.stat_dist)))
        if resid > 1e-10:
            raise NumericalError(f"stationary cache drifted: residual {resid:.3e}")

    def sweep(self, state: ChainState, rng: np.random.Generator) -> None:
        cfg = self.cfg
        if cfg.update_assoc:
            self.update_assoc(state, rng)
        if cfg.update_states:
            self.update_states(state, rng)
        if cfg.update_means:
            self.update_means(state, rng)
        if cfg.update_sds:
            self.update_sds(state, rng)
        if cfg.update_trans:
            self.update_trans(state, rng)


def make_checkpoint(
    kernel: Kernel,
    state: ChainState,
    rng: np.random.Generator,
    builder: _TraceBuilder,
    iteration: int,
) -> Checkpoint:
    cfg = kernel.cfg
    return Checkpoint(
        iteration=iteration,
        iterations=cfg.iterations,
        burn_in=cfg.burn_in,
        thin=cfg.thin,
        seed=cfg.seed,
        assoc=state.assoc.copy(),
        states=state.states.copy(),
        trans=state.trans.copy(),
        means=state.means.copy(),
        sds=state.sds.copy(),
        stat_dist=np.array(state.stat_dist),
        gene_loglik=state.gene_loglik.copy(),
        persist_counts=state.persist_counts.copy(),
        rng_state=rng.bit_generator.state,
        kept=builder.kept,
        assoc_counts=builder.assoc_counts.copy(),
        state_counts=builder.state_counts_flat.copy(),
        means_samples=builder.means[: builder.kept].copy(),
        sds_samples=builder.sds[: builder.kept].copy(),
        trans_samples=builder.trans[: builder.kept].copy(),
        assoc_size=builder.assoc_size[: builder.kept].copy(),
        occupancy=builder.occupancy[: builder.kept].copy(),
        log_posterior=builder.log_posterior[: builder.kept].copy(),
        stats=kernel.stats.as_dict(),
    )


def _restore(kernel: Kernel, checkpoint: Checkpoint, builder: _TraceBuilder):
    cfg = kernel.cfg
    for name in ("iterations", "burn_in", "thin", "seed"):
        if getattr(checkpoint, name) != getattr(cfg, name):
            raise ValidationError(
                f"checkpoint {name}={getattr(checkpoint, name)} does not match "
                f"config {name}={getattr(cfg, name)}"
            )
    if checkpoint.states.shape != (kernel.n, kernel.n_probes):
        raise ValidationError("checkpoint state shape does not match the data")
    state = ChainState(
        assoc=checkpoint.assoc.astype(np.int8).copy(),
        states=checkpoint.states.astype(np.int8).copy(),
        trans=checkpoint.trans.copy(),
        means=checkpoint.means.copy(),
        sds=checkpoint.sds.copy(),
        stat_dist=checkpoint.stat_dist.copy(),
        gene_loglik=checkpoint.gene_loglik.copy(),
        persist_counts=checkpoint.persist_counts.astype(np.int64).copy(),
        iteration=checkpoint.iteration,
    )
    k = int(checkpoint.kept)
    builder.assoc_counts[...] = checkpoint.assoc_counts
    builder.state_counts_flat[...] = checkpoint.state_counts
    builder.means[:k] = checkpoint.means_samples
    builder.sds[:k] = checkpoint.sds_samples
    builder.trans[:k] = checkpoint.trans_samples
    builder.assoc_size[:k] = checkpoint.assoc_size
    builder.occupancy[:k] = checkpoint.occupancy
    builder.log_posterior[:k] = checkpoint.log_posterior
    builder.kept = k
    kernel.stats = AcceptanceStats.from_dict(checkpoint.stats)
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = checkpoint.rng_state
    return state, rng


def run_chain(
    data,
    hyper,
    hmm_hyper,
    cfg,
    *,
    standardize: bool = True,
    resume: Checkpoint | None = None,
    checkpoint_every: int | None = None,
    on_checkpoint=None,
) -> ChainTrace:
    """Run the full sampler and return the retained trace.

    ``data`` may be an :class:`~cnvlink.model.ObservedData` or an already
    validated context (in which case the other model arguments are ignored).
    ``resume`` continues a checkpointed run bit-exactly; ``checkpoint_every``
    invokes ``on_checkpoint(checkpoint)`` after every that-many sweeps and at
    the end.
    """
    from .model import validate

    if isinstance(data, ValidatedContext):
        ctx = data
    else:
        ctx = validate(data, hyper, hmm_hyper, cfg, standardize=standardize)
    kernel = Kernel(ctx)
    cfg = ctx.cfg
    builder = _TraceBuilder(kernel.n, kernel.n_genes, kernel.n_probes, cfg.n_retained)
    if resume is not None:
        state, rng = _restore(kernel, resume, builder)
        start = resume.iteration
    else:
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        state = kernel.init_state(rng)
        start = 0
    for it in range(start, cfg.iterations):
        try:
            kernel.sweep(state, rng)
            if cfg.debug_checks:
                kernel.check_coherence(state)
            state.iteration = it + 1
            if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                builder.add(state, kernel.log_posterior(state))
        except (NumericalError, ValidationError) as err:
            raise NumericalError(f"iteration {it}: {err}") from err
        if (
            checkpoint_every
            and on_checkpoint is not None
            and (it + 1) % checkpoint_every == 0
            and (it + 1) < cfg.iterations
        ):
            on_checkpoint(make_checkpoint(kernel, state, rng, builder, it + 1))
    trace = builder.to_trace(cfg, kernel.stats)
    if on_checkpoint is not None:
        on_checkpoint(make_checkpoint(kernel, state, rng, builder, cfg.iterations))
    return trace
