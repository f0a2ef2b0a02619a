"""Gibbs sampling of the finite-mixture posterior over frequency distributions.

Each chain alternates four conjugate updates per sweep: latent component
assignments, mixture weights (Dirichlet), per-component class simplices
(Dirichlet, Beta for two classes) and per-component, per-dimension
Normal-Gamma output parameters. Chains run independently and their
retained draws are concatenated in chain order.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from ._kernels import assign_and_tally
from .errors import DiagnosticUnavailableError, DimensionError, EmptyDataError
from .model import MAX_Y_DIM, CalibrationSet, FrequencySample, MixtureComponent, TransducerModel

log = logging.getLogger(__name__)

RHAT_THRESHOLD = 1.1


@dataclass(frozen=True)
class SamplerConfig:
    """Sampler size, schedule and prior hyperparameters.

    ``None`` hyperparameters are resolved from the data: the mean prior
    is centred on the data mean and the precision prior's rate is twice
    the data variance, per output dimension. The weight concentration
    defaults to ``1 / n_components``.
    """

    n_components: int = 64
    n_samples: int = 4096
    n_chains: int = 16
    burn_in: int = 2000
    thin: int = 10
    seed: int = 0
    dirichlet_concentration: float | None = None
    class_pseudocount: float | Sequence[float] = 1.0
    mean_prior: Sequence[float] | None = None
    mean_prior_scale: float = 0.01
    precision_shape: float = 2.0
    precision_rate: Sequence[float] | None = None
    workers: int | None = None
    trace_points: int = 5

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be at least 1")
        if self.n_chains < 1 or self.n_samples < 1:
            raise ValueError("need at least one chain and one sample")
        if self.n_samples % self.n_chains:
            raise ValueError("n_samples must be divisible by n_chains")
        if self.burn_in < 0 or self.thin < 1:
            raise ValueError("burn_in must be >= 0 and thin >= 1")
        positive = [self.mean_prior_scale, self.precision_shape]
        if self.dirichlet_concentration is not None:
            positive.append(self.dirichlet_concentration)
        positive.extend(np.atleast_1d(self.class_pseudocount).tolist())
        if self.precision_rate is not None:
            positive.extend(np.atleast_1d(self.precision_rate).tolist())
        if min(positive) <= 0:
            raise ValueError("prior hyperparameters must be positive")

    @property
    def per_chain(self) -> int:
        return self.n_samples // self.n_chains

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("class_pseudocount", "mean_prior", "precision_rate"):
            if out[key] is not None and not np.isscalar(out[key]):
                out[key] = [float(v) for v in out[key]]
        out.pop("workers")
        return out


@dataclass(frozen=True)
class Priors:
    """Hyperparameters resolved against a particular data set."""

    concentration: np.ndarray  # (K,)
    class_pseudocounts: np.ndarray  # (C,)
    mean: np.ndarray  # (d,)
    mean_scale: float
    shape: float
    rate: np.ndarray  # (d,)

    @classmethod
    def resolve(cls, data: CalibrationSet, config: SamplerConfig) -> "Priors":
        K, C, d = config.n_components, data.n_classes, data.y_dim
        gamma = config.dirichlet_concentration
        if gamma is None:
            gamma = 1.0 / K
        a = np.broadcast_to(np.asarray(config.class_pseudocount, dtype=float), (C,)).copy()
        if config.mean_prior is None:
            m0 = data.outputs.mean(axis=0)
        else:
            m0 = np.broadcast_to(np.asarray(config.mean_prior, dtype=float), (d,)).copy()
        if config.precision_rate is None:
            var = data.outputs.var(axis=0)
            # a single distinct value has no spread to scale to
            var = np.where(var > 0, var, 1.0)
            h = 2.0 * var
        else:
            h = np.broadcast_to(np.asarray(config.precision_rate, dtype=float), (d,)).copy()
        return cls(np.full(K, float(gamma)), a, m0, float(config.mean_prior_scale),
                   float(config.precision_shape), h)


@dataclass
class ChainState:
    """Current parameters, assignments and sufficient statistics of a chain."""

    weights: np.ndarray  # (K,)
    class_params: np.ndarray  # (K, C)
    means: np.ndarray  # (K, d)
    precisions: np.ndarray  # (K, d)
    z: np.ndarray  # (M,)
    counts: np.ndarray  # (K,)
    class_tally: np.ndarray  # (K, C)
    sum_y: np.ndarray  # (K, d)
    sum_yy: np.ndarray  # (K, d)
    rng: np.random.Generator = field(repr=False)
    sweep: int = 0

    @property
    def stddevs(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.precisions)

    def frequency_sample(self) -> FrequencySample:
        return FrequencySample(
            tuple(
                MixtureComponent(float(w), tuple(a.tolist()), tuple(m.tolist()), tuple(s.tolist()))
                for w, a, m, s in zip(self.weights, self.class_params, self.means, self.stddevs)
            )
        )


def sufficient_statistics(z, data: CalibrationSet, n_components: int):
    """Recompute (counts, class_tally, sum_y, sum_yy) from assignments."""
    K, C, d = n_components, data.n_classes, data.y_dim
    counts = np.bincount(z, minlength=K)
    class_tally = np.zeros((K, C), dtype=np.int64)
    np.add.at(class_tally, (z, data.classes), 1)
    sum_y = np.zeros((K, d))
    sum_yy = np.zeros((K, d))
    for j in range(d):
        sum_y[:, j] = np.bincount(z, weights=data.outputs[:, j], minlength=K)
        sum_yy[:, j] = np.bincount(z, weights=data.outputs[:, j] ** 2, minlength=K)
    return counts, class_tally, sum_y, sum_yy


def conjugate_posteriors(state: ChainState, priors: Priors) -> dict:
    """Full-conditional hyperparameters implied by the state's statistics.

    Returns the Dirichlet parameters of the weights (``weights``) and of
    every component's class simplex (``classes``), and the Normal-Gamma
    parameters ``mean``, ``scale``, ``shape``, ``rate`` per component and
    dimension.
    """
    n = state.counts.astype(float)[:, None]
    safe_n = np.where(n > 0, n, 1.0)
    ybar = np.where(n > 0, state.sum_y / safe_n, 0.0)
    scatter = np.maximum(state.sum_yy - n * ybar**2, 0.0)
    kappa = priors.mean_scale + n
    mean = (priors.mean_scale * priors.mean[None, :] + n * ybar) / kappa
    shape = priors.shape + 0.5 * n
    rate = (
        priors.rate[None, :]
        + 0.5 * scatter
        + priors.mean_scale * n * (ybar - priors.mean[None, :]) ** 2 / (2.0 * kappa)
    )
    shape = np.broadcast_to(shape, rate.shape)
    return {
        "weights": priors.concentration + state.counts,
        "classes": priors.class_pseudocounts[None, :] + state.class_tally,
        "mean": mean,
        "scale": kappa * np.ones_like(rate),
        "shape": shape,
        "rate": rate,
    }


def _dirichlet_rows(rng, alpha):
    g = rng.standard_gamma(alpha)
    return g / g.sum(axis=-1, keepdims=True)


def init_chain(data: CalibrationSet, priors: Priors, rng: np.random.Generator) -> ChainState:
    """Start a chain with component means at randomly chosen data points."""
    M = len(data)
    K = priors.concentration.shape[0]
    C, d = data.n_classes, data.y_dim
    picks = rng.integers(0, M, size=K)
    state = ChainState(
        weights=np.full(K, 1.0 / K),
        class_params=_dirichlet_rows(rng, np.broadcast_to(priors.class_pseudocounts, (K, C))),
        means=data.outputs[picks].copy(),
        # start at half the data spread: rate is twice the variance by default
        precisions=np.broadcast_to(8.0 / priors.rate, (K, d)).copy(),
        z=np.zeros(M, dtype=np.int64),
        counts=np.zeros(K, dtype=np.int64),
        class_tally=np.zeros((K, C), dtype=np.int64),
        sum_y=np.zeros((K, d)),
        sum_yy=np.zeros((K, d)),
        rng=rng,
    )
    return state


def gibbs_sweep(state: ChainState, data: CalibrationSet, priors: Priors) -> ChainState:
    """One full update cycle; returns a new state sharing the generator."""
    rng = state.rng
    K = state.weights.shape[0]
    C, d = data.n_classes, data.y_dim
    z = np.empty(len(data), dtype=np.int64)
    counts = np.empty(K, dtype=np.int64)
    class_tally = np.empty((K, C), dtype=np.int64)
    sum_y = np.empty((K, d))
    sum_yy = np.empty((K, d))
    with np.errstate(divide="ignore"):
        log_w = np.log(state.weights)
        log_alpha = np.log(state.class_params)
    u = rng.random(len(data))
    assign_and_tally(
        data.outputs, data.classes, log_w, log_alpha, state.means, state.precisions,
        u, z, counts, class_tally, sum_y, sum_yy,
    )
    new = replace(state, z=z, counts=counts, class_tally=class_tally, sum_y=sum_y,
                  sum_yy=sum_yy, sweep=state.sweep + 1)
    post = conjugate_posteriors(new, priors)
    new.weights = _dirichlet_rows(rng, post["weights"])
    new.class_params = _dirichlet_rows(rng, post["classes"])
    prec = rng.gamma(post["shape"], 1.0 / post["rate"])
    new.precisions = prec
    new.means = post["mean"] + rng.standard_normal((K, d)) / np.sqrt(post["scale"] * prec)
    return new


def _run_chain(data, priors, config, seed_seq):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    state = init_chain(data, priors, rng)
    for _ in range(config.burn_in):
        state = gibbs_sweep(state, data, priors)
    n = config.per_chain
    K, C, d = config.n_components, data.n_classes, data.y_dim
    out_w = np.empty((n, K))
    out_a = np.empty((n, K, C))
    out_m = np.empty((n, K, d))
    out_s = np.empty((n, K, d))
    for r in range(n):
        for _ in range(config.thin):
            state = gibbs_sweep(state, data, priors)
        out_w[r] = state.weights
        out_a[r] = state.class_params
        out_m[r] = state.means
        out_s[r] = state.stddevs
    return out_w, out_a, out_m, out_s


def trace_points(data: CalibrationSet, n_points: int = 5) -> np.ndarray:
    """Fixed outputs at which p(c=1 | y) is monitored across chains."""
    qs = np.linspace(0.1, 0.9, n_points)
    return np.quantile(data.outputs, qs, axis=0)


def fit(data: CalibrationSet, config: SamplerConfig | None = None) -> TransducerModel:
    """Fit a transducer to calibration data.

    Parameters
    ----------
    data : CalibrationSet
    config : SamplerConfig, optional

    Returns
    -------
    TransducerModel
        ``config.n_samples`` posterior draws, chain-major. Its provenance
        records the configuration, the data digest and summary, and the
        convergence report of :func:`diagnostics` when at least two chains
        with ten retained draws each are available.
    """
    config = config or SamplerConfig()
    if len(data) == 0:
        raise EmptyDataError("cannot fit on an empty calibration set")
    if data.y_dim > MAX_Y_DIM:
        raise DimensionError(f"output dimension {data.y_dim} exceeds {MAX_Y_DIM}")
    priors = Priors.resolve(data, config)
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    workers = config.workers or min(config.n_chains, os.cpu_count() or 1)
    log.info("fitting %d chains on %d records with %d workers", config.n_chains, len(data), workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda s: _run_chain(data, priors, config, s), seeds))
    else:
        parts = [_run_chain(data, priors, config, s) for s in seeds]
    arrays = [np.concatenate([p[i] for p in parts]) for i in range(4)]
    provenance = {
        "config": config.to_dict(),
        "seed": config.seed,
        "data_digest": data.digest(),
        "data_summary": data.summary(),
    }
    model = TransducerModel(*arrays, provenance=provenance)
    if config.n_chains >= 2 and config.per_chain >= 10:
        traces = chain_traces(model, data, config.n_chains, config.trace_points)
        report = diagnostics(traces)
        model.provenance["diagnostics"] = {k: asdict(v) for k, v in report.items()}
        flagged = [k for k, v in report.items() if v.flagged]
        if flagged:
            log.warning("R-hat above %.2f for %s", RHAT_THRESHOLD, ", ".join(flagged))
    return model


def chain_traces(model: TransducerModel, data: CalibrationSet, n_chains: int,
                 n_points: int = 5) -> dict[str, np.ndarray]:
    """Scalar summaries of every retained draw, shaped (chains, draws).

    Monitors the log joint density of the calibration data and
    p(c=1 | y) at ``n_points`` fixed output quantiles.
    """
    T = model.n_samples
    log_scale, s, _ = model._per_sample_scaled(data.outputs)
    idx = np.arange(len(data))
    with np.errstate(divide="ignore"):
        loglik = (log_scale + np.log(s[idx, :, data.classes]) + np.log(T)).sum(axis=0)
    traces = {"log_joint": loglik.reshape(n_chains, -1)}
    pts = trace_points(data, n_points)
    curves = model.per_sample_curves(pts)[:, :, 1]
    for i, row in enumerate(curves):
        traces[f"p1_at_q{i}"] = row.reshape(n_chains, -1)
    return traces


@dataclass(frozen=True)
class StatDiagnostic:
    rhat: float
    ess: float
    flagged: bool


def split_rhat(draws) -> float:
    """Split potential scale reduction factor of a (chains, draws) array.

    Zero variance everywhere gives 1; zero within-chain variance with
    distinct chain levels gives infinity.
    """
    draws = np.asarray(draws, dtype=float)
    m, n = draws.shape
    half = n // 2
    split = np.concatenate([draws[:, :half], draws[:, n - half:]], axis=0)
    n = half
    means = split.mean(axis=1)
    W = split.var(axis=1, ddof=1).mean()
    B_over_n = means.var(ddof=1)
    if W == 0:
        return 1.0 if B_over_n == 0 else float("inf")
    var_plus = (n - 1) / n * W + B_over_n
    return float(np.sqrt(var_plus / W))


def effective_sample_size(draws) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence."""
    draws = np.asarray(draws, dtype=float)
    m, n = draws.shape
    centred = draws - draws.mean(axis=1, keepdims=True)
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(centred, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n] / n
    chain_var = acov[:, 0] * n / (n - 1)
    W = chain_var.mean()
    var_plus = W * (n - 1) / n + (draws.mean(axis=1).var(ddof=1) if m > 1 else 0.0)
    if var_plus == 0:
        return float(m * n)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # sum adjacent pairs while positive, enforcing monotonicity
    pair_sums = []
    prev = np.inf
    for t in range(0, n - 1, 2):
        p = rho[t] + rho[t + 1]
        if p <= 0:
            break
        p = min(p, prev)
        pair_sums.append(p)
        prev = p
    tau = -1.0 + 2.0 * sum(pair_sums) if pair_sums else 1.0
    tau = max(tau, 1.0 / np.log10(m * n + 10))
    return float(m * n / tau)


def diagnostics(traces: Mapping[str, Sequence] | Sequence) -> dict[str, StatDiagnostic]:
    """Split-R-hat and effective sample size for each monitored statistic.

    Parameters
    ----------
    traces : mapping of name to array (chains, draws), or one such array

    Raises
    ------
    DiagnosticUnavailableError
        With fewer than two chains or ten draws per chain.
    """
    if not isinstance(traces, Mapping):
        traces = {"stat": traces}
    report = {}
    for name, draws in traces.items():
        draws = np.asarray(draws, dtype=float)
        if draws.ndim != 2 or draws.shape[0] < 2 or draws.shape[1] < 10:
            raise DiagnosticUnavailableError(
                f"{name}: need at least 2 chains of 10 draws, got shape {draws.shape}"
            )
        rhat = split_rhat(draws)
        report[name] = StatDiagnostic(rhat, effective_sample_size(draws), not rhat <= RHAT_THRESHOLD)
    return report
