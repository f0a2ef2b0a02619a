"""Known generators for synthetic calibration data, and exact Bayes on a grid.

The generator uses the same kernel family as fitted transducers
(categorical class times product-Gaussian output), so any gap between a
fitted model and :func:`grid_bayes` is sampler and finite-data error,
not model mismatch. The computations here are done directly in linear
space with :mod:`scipy.stats` and share no code with :mod:`.model`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize, stats

from .model import CalibrationSet, FrequencySample, MixtureComponent, TransducerModel

BLOCK_SIZE = 1 << 16


@dataclass(frozen=True)
class GeneratorSpec:
    components: tuple[MixtureComponent, ...]
    seed: int = 0

    def __post_init__(self):
        # FrequencySample checks weights, shapes and simplices for us
        sample = FrequencySample(tuple(self.components))
        object.__setattr__(self, "components", sample.components)
        dims = {len(c.means) for c in self.components}
        classes = {len(c.class_params) for c in self.components}
        if len(dims) != 1 or len(classes) != 1:
            raise ValueError("all components must share output dimension and class count")

    @property
    def n_classes(self) -> int:
        return len(self.components[0].class_params)

    @property
    def y_dim(self) -> int:
        return len(self.components[0].means)

    @property
    def class_marginal(self) -> np.ndarray:
        return sum(c.weight * np.asarray(c.class_params) for c in self.components)

    def as_model(self) -> TransducerModel:
        """Single-sample transducer holding the generator verbatim."""
        return TransducerModel.from_samples([FrequencySample(self.components)],
                                            provenance={"generator_seed": self.seed})


def class_conditional_spec(per_class: Mapping[int, Sequence[tuple[float, float | Sequence[float], float | Sequence[float]]]],
                           prevalence: Sequence[float], seed: int = 0) -> GeneratorSpec:
    """Generator whose components each belong to exactly one class.

    ``per_class[c]`` lists (weight, mean, sd) of the Gaussian mixture of
    outputs given class ``c``; weights within a class need not be
    normalized. ``prevalence`` sets the class proportions.
    """
    prevalence = np.asarray(prevalence, dtype=float)
    C = prevalence.shape[0]
    comps = []
    for c, parts in sorted(per_class.items()):
        total = sum(w for w, _, _ in parts)
        onehot = tuple(1.0 if i == c else 0.0 for i in range(C))
        for w, mean, sd in parts:
            comps.append(MixtureComponent(
                float(prevalence[c] * w / total), onehot,
                tuple(np.atleast_1d(mean).astype(float).tolist()),
                tuple(np.atleast_1d(sd).astype(float).tolist()),
            ))
    # absorb rounding so the weights pass the simplex check
    drift = 1.0 - sum(m.weight for m in comps)
    head = comps[0]
    comps[0] = MixtureComponent(head.weight + drift, head.class_params, head.means, head.stddevs)
    return GeneratorSpec(tuple(comps), seed)


def synth_generate(spec: GeneratorSpec, n: int) -> CalibrationSet:
    """Draw ``n`` i.i.d. (class, output) pairs from the generator.

    Draws come in blocks of ``BLOCK_SIZE``; block ``b`` uses the ``b``-th
    child of the spec's seed, so a given seed always yields the same
    records.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    w = np.array([c.weight for c in spec.components])
    alpha = np.array([c.class_params for c in spec.components])
    mu = np.array([c.means for c in spec.components])
    sd = np.array([c.stddevs for c in spec.components])
    n_blocks = -(-n // BLOCK_SIZE)
    children = np.random.SeedSequence(spec.seed).spawn(n_blocks)
    classes, outputs = [], []
    for b, child in enumerate(children):
        m = min(BLOCK_SIZE, n - b * BLOCK_SIZE)
        rng = np.random.default_rng(child)
        k = rng.choice(len(w), size=m, p=w / w.sum())
        u = rng.random(m)
        cdf = np.cumsum(alpha[k], axis=1)
        c = (u[:, None] >= cdf[:, :-1]).sum(axis=1)
        y = mu[k] + sd[k] * rng.standard_normal((m, spec.y_dim))
        classes.append(c)
        outputs.append(y)
    return CalibrationSet(np.concatenate(classes), np.concatenate(outputs), n_classes=spec.n_classes)


def grid_bayes(spec: GeneratorSpec, y_grid) -> np.ndarray:
    """Exact p(c | y) of the generator at each grid point, shape (n, C)."""
    y = np.asarray(y_grid, dtype=float)
    if y.ndim == 1:
        y = y[:, None] if spec.y_dim == 1 else y[None, :]
    joint = np.zeros((y.shape[0], spec.n_classes))
    for comp in spec.components:
        dens = np.prod(stats.norm.pdf(y, loc=comp.means, scale=comp.stddevs), axis=1)
        joint += comp.weight * dens[:, None] * np.asarray(comp.class_params)[None, :]
    return joint / joint.sum(axis=1, keepdims=True)


def marginal_cdf(spec: GeneratorSpec, y) -> np.ndarray:
    """CDF of a one-dimensional generator's output marginal."""
    if spec.y_dim != 1:
        raise ValueError("the marginal CDF is only defined for one-dimensional outputs")
    y = np.asarray(y, dtype=float)
    return sum(c.weight * stats.norm.cdf(y, c.means[0], c.stddevs[0]) for c in spec.components)


def central_interval(spec: GeneratorSpec, mass: float = 0.95) -> tuple[float, float]:
    """Equal-tailed interval holding ``mass`` of the output marginal."""
    mu = [c.means[0] for c in spec.components]
    sd = [c.stddevs[0] for c in spec.components]
    lo, hi = min(mu) - 20 * max(sd), max(mu) + 20 * max(sd)
    tail = 0.5 * (1.0 - mass)
    return tuple(
        optimize.brentq(lambda v, q=q: float(marginal_cdf(spec, v)) - q, lo, hi, xtol=1e-12)
        for q in (tail, 1.0 - tail)
    )
