"""Builders and instruments shared by the test modules.

These build small validated problem instances, hand-assembled sampler states
with frozen emission/transition parameters, and a scriptable random generator
that lets a test force specific proposals through the Metropolis moves while
delegating everything else to a real generator.
"""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np

from cnvlink.likelihood import stationary_distribution
from cnvlink.model import (
    HmmHyper,
    ObservedData,
    RegressionHyper,
    SamplerConfig,
    ValidatedContext,
    validate,
)
from cnvlink.sampler import ChainState, Kernel


# ---------------- data and config builders ----------------


def make_y(n: int, n_genes: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, n_genes))


def make_x(n: int, n_probes: int, seed: int = 1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return 0.3 * rng.normal(size=(n, n_probes))


def make_data(
    n: int = 5,
    n_genes: int = 3,
    n_probes: int = 4,
    seed: int = 0,
    y: np.ndarray | None = None,
    x: np.ndarray | None = None,
    pos: np.ndarray | None = None,
    fragment_length: float | None = None,
) -> ObservedData:
    if y is None:
        y = make_y(n, n_genes, seed)
    if x is None:
        x = make_x(n, n_probes, seed + 1)
    if pos is None:
        pos = np.arange(x.shape[1], dtype=float)
    if fragment_length is None:
        fragment_length = float(pos[-1] - pos[0] + 1.0)
    return ObservedData(y=y, x=x, pos=pos, fragment_length=fragment_length)


def make_cfg(**kwargs) -> SamplerConfig:
    defaults = dict(iterations=10, burn_in=5, thin=1, seed=0)
    defaults.update(kwargs)
    return SamplerConfig(**defaults)


def make_ctx(
    data: ObservedData | None = None,
    hyper: RegressionHyper | None = None,
    hmm_hyper: HmmHyper | None = None,
    cfg: SamplerConfig | None = None,
    **data_kwargs,
) -> ValidatedContext:
    data = data if data is not None else make_data(**data_kwargs)
    return validate(
        data,
        hyper if hyper is not None else RegressionHyper(),
        hmm_hyper if hmm_hyper is not None else HmmHyper(),
        cfg if cfg is not None else make_cfg(),
    )


# ---------------- hand-assembled kernels with frozen parameters ----------------


def raw_context(
    y: np.ndarray,
    x: np.ndarray,
    *,
    pos: np.ndarray | None = None,
    fragment_length: float | None = None,
    hyper: RegressionHyper | None = None,
    hmm_hyper: HmmHyper | None = None,
    cfg: SamplerConfig | None = None,
) -> ValidatedContext:
    """A context that bypasses standardization (and the two-sample minimum),
    so tests can model y exactly as given, including single-sample problems."""
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n, n_genes = y.shape
    n_probes = x.shape[1]
    if pos is None:
        pos = np.arange(n_probes, dtype=float)
    if fragment_length is None:
        fragment_length = float(pos[-1] - pos[0] + 1.0)
    data = SimpleNamespace(
        y=y,
        x=x,
        pos=np.asarray(pos, dtype=float),
        fragment_length=float(fragment_length),
        n_samples=n,
        n_genes=n_genes,
        n_probes=n_probes,
    )
    if hyper is None:
        hyper = RegressionHyper(resid_scale=0.05)
    if hyper.resid_scale is None:
        raise ValueError("raw_context needs an explicit resid_scale")
    return ValidatedContext(
        data=data,
        hyper=hyper,
        hmm_hyper=hmm_hyper if hmm_hyper is not None else HmmHyper(),
        cfg=cfg if cfg is not None else make_cfg(),
        standardized=False,
        y_center=np.zeros(n_genes),
        y_scale=np.ones(n_genes),
    )


def build_kernel_state(
    ctx: ValidatedContext,
    *,
    assoc: np.ndarray,
    states: np.ndarray,
    trans: np.ndarray,
    means: np.ndarray,
    sds: np.ndarray,
) -> tuple[Kernel, ChainState]:
    """Kernel plus a coherent chain state holding the given configuration."""
    kernel = Kernel(ctx)
    assoc = np.asarray(assoc, dtype=np.int8).copy()
    states = np.asarray(states, dtype=np.int8).copy()
    trans = np.asarray(trans, dtype=np.float64).copy()
    stat = stationary_distribution(trans)
    gene_ll = np.array(
        [kernel._gene_loglik(g, assoc[g], states) for g in range(kernel.n_genes)]
    )
    persist = (states[:, 1:] == states[:, :-1]).sum(axis=0).astype(np.int64)
    state = ChainState(
        assoc=assoc,
        states=states,
        trans=trans,
        means=np.asarray(means, dtype=np.float64).copy(),
        sds=np.asarray(sds, dtype=np.float64).copy(),
        stat_dist=np.asarray(stat),
        gene_loglik=gene_ll,
        persist_counts=persist,
    )
    return kernel, state


def copy_state(state: ChainState) -> ChainState:
    return ChainState(
        assoc=state.assoc.copy(),
        states=state.states.copy(),
        trans=state.trans.copy(),
        means=state.means.copy(),
        sds=state.sds.copy(),
        stat_dist=np.array(state.stat_dist),
        gene_loglik=state.gene_loglik.copy(),
        persist_counts=state.persist_counts.copy(),
        iteration=state.iteration,
    )


def hyper_kwargs(hyper: RegressionHyper) -> dict:
    """The regression hyperparameters as keyword arguments for the oracles."""
    return dict(
        intercept_prec=hyper.intercept_prec,
        slab_prec=hyper.slab_prec,
        resid_df=hyper.resid_df,
        resid_scale=hyper.resid_scale,
    )


def density_kwargs(kernel: Kernel) -> dict:
    """Everything the joint-density oracle needs besides the configuration."""
    h = kernel.hyper
    return dict(
        pos=kernel.pos,
        fragment_length=kernel.fragment_length,
        intercept_prec=h.intercept_prec,
        slab_prec=h.slab_prec,
        resid_df=h.resid_df,
        resid_scale=h.resid_scale,
        incl_a=h.incl_a,
        incl_b=h.incl_b,
        alpha=h.alpha,
    )


def joint_log_density(kernel: Kernel, state: ChainState, oracles_module) -> float:
    """Oracle joint log density of the kernel's data at the given state."""
    return oracles_module.full_log_density(
        kernel.y,
        kernel.x,
        state.assoc,
        state.states,
        trans=state.trans,
        means=state.means,
        sds=state.sds,
        stat_dist=state.stat_dist,
        **density_kwargs(kernel),
    )


# ---------------- scriptable random generator ----------------


class ScriptedRNG:
    """Delegates to a real generator except where a test queued a value.

    ``push("random", 0.3)`` makes the next ``random()`` call return 0.3;
    unqueued calls fall through to the wrapped generator. Attribute access
    for anything not scripted (``bit_generator``, distribution methods, ...)
    also falls through, so this object can stand in for a Generator anywhere
    inside the sampler.
    """

    def __init__(self, seed: int = 0) -> None:
        self._rng = np.random.default_rng(seed)
        self._queues: dict[str, list] = {}

    def push(self, name: str, *values) -> None:
        self._queues.setdefault(name, []).extend(values)

    def assert_exhausted(self) -> None:
        leftovers = {k: v for k, v in self._queues.items() if v}
        assert not leftovers, f"unconsumed scripted draws: {leftovers}"

    def _pop(self, name: str):
        queue = self._queues.get(name)
        if queue:
            return queue.pop(0)
        return None

    def __getattr__(self, name: str):
        return getattr(self._rng, name)

    def random(self, *args, **kwargs):
        value = self._pop("random")
        if value is not None:
            return value
        return self._rng.random(*args, **kwargs)

    def integers(self, *args, **kwargs):
        value = self._pop("integers")
        if value is not None:
            return value
        return self._rng.integers(*args, **kwargs)

    def geometric(self, *args, **kwargs):
        value = self._pop("geometric")
        if value is not None:
            return value
        return self._rng.geometric(*args, **kwargs)

    def choice(self, *args, **kwargs):
        value = self._pop("choice")
        if value is not None:
            return np.asarray(value)
        return self._rng.choice(*args, **kwargs)

    def dirichlet(self, *args, **kwargs):
        value = self._pop("dirichlet")
        if value is not None:
            return np.asarray(value, dtype=float)
        return self._rng.dirichlet(*args, **kwargs)


def proposal_u(cum: np.ndarray, target_state: int) -> float:
    """A uniform that makes the column move propose ``target_state`` (1-based)
    when inverted through the cumulative proposal row."""
    lo = 0.0 if target_state == 1 else float(cum[target_state - 2])
    hi = float(cum[target_state - 1])
    return 0.5 * (lo + hi)


def assert_frozen(arr: np.ndarray) -> None:
    assert not arr.flags.writeable
