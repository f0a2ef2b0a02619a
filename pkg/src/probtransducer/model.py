"""Fitted output-to-probability transducers and the probabilities they imply.

A transducer is a set of ``T`` posterior draws of the long-run joint
frequency distribution of (class, output). Every draw is a ``K``-term
mixture of a categorical class kernel and a product of per-dimension
Gaussian output kernels. All predictive probabilities average over the
pooled ``T * K`` terms with weights ``q / T``.

Densities are evaluated in log space; the pooled sum underflows easily
in linear space once the output is far from the data.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionError,
    EmptyDataError,
    InvalidOutputError,
    UndefinedConditionalError,
)

MAX_Y_DIM = 4

_LOG_2PI = math.log(2.0 * math.pi)
# Elements per chunk of the (n_outputs, n_terms) work arrays.
_CHUNK_ELEMENTS = 1 << 21


@dataclass(frozen=True)
class CalibrationRecord:
    class_label: int
    output: tuple[float, ...]


class CalibrationSet:
    """Held-out (true class, classifier output) pairs.

    Parameters
    ----------
    classes : array_like of int, shape (M,)
    outputs : array_like of float, shape (M,) or (M, d)
    n_classes : int, optional
        Defaults to ``max(classes) + 1`` but never less than 2, so that a
        class absent from the data still exists in the fitted model.
    """

    def __init__(self, classes, outputs, n_classes: int | None = None):
        classes = np.asarray(classes)
        outputs = np.asarray(outputs, dtype=float)
        if outputs.ndim == 1:
            outputs = outputs[:, None]
        if outputs.ndim != 2:
            raise DimensionError("outputs must be a 1-D or 2-D array")
        if classes.ndim != 1 or classes.shape[0] != outputs.shape[0]:
            raise DimensionError(
                f"{classes.shape[0] if classes.ndim == 1 else '?'} class labels "
                f"for {outputs.shape[0]} outputs"
            )
        if classes.size and not np.all(np.equal(np.mod(classes, 1), 0)):
            raise DimensionError("class labels must be integers")
        classes = classes.astype(np.int64)
        if classes.size and classes.min() < 0:
            raise DimensionError("class labels must be non-negative")
        if not np.all(np.isfinite(outputs)):
            raise InvalidOutputError("calibration outputs must be finite")
        inferred = int(classes.max()) + 1 if classes.size else 2
        if n_classes is None:
            n_classes = max(2, inferred)
        if n_classes < 2:
            raise DimensionError("need at least two classes")
        if inferred > n_classes:
            raise DimensionError(
                f"class label {inferred - 1} out of range for {n_classes} classes"
            )
        self.classes = classes
        self.outputs = outputs
        self.n_classes = int(n_classes)
        self.classes.setflags(write=False)
        self.outputs.setflags(write=False)

    @classmethod
    def from_records(cls, records: Iterable[CalibrationRecord], n_classes=None):
        records = list(records)
        if not records:
            raise EmptyDataError("no calibration records")
        dims = {len(r.output) for r in records}
        if len(dims) != 1:
            raise DimensionError(f"records disagree on output dimension: {sorted(dims)}")
        return cls(
            [r.class_label for r in records],
            np.array([r.output for r in records], dtype=float),
            n_classes=n_classes,
        )

    def __len__(self):
        return self.classes.shape[0]

    @property
    def y_dim(self) -> int:
        return self.outputs.shape[1]

    @property
    def records(self) -> list[CalibrationRecord]:
        return [
            CalibrationRecord(int(c), tuple(float(v) for v in y))
            for c, y in zip(self.classes, self.outputs)
        ]

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.classes, minlength=self.n_classes)

    @property
    def empirical_class_freq(self) -> np.ndarray:
        counts = self.class_counts
        return counts / counts.sum()

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.n_classes).tobytes())
        h.update(np.ascontiguousarray(self.classes, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(self.outputs, dtype="<f8").tobytes())
        return h.hexdigest()

    def summary(self) -> dict:
        """Per-dimension range and spread, used to place integration grids."""
        if len(self) == 0:
            raise EmptyDataError("no calibration records")
        std = self.outputs.std(axis=0) if len(self) > 1 else np.zeros(self.y_dim)
        return {
            "n_records": len(self),
            "class_counts": self.class_counts.tolist(),
            "y_min": self.outputs.min(axis=0).tolist(),
            "y_max": self.outputs.max(axis=0).tolist(),
            "y_std": std.tolist(),
        }

    def subset(self, index) -> "CalibrationSet":
        return CalibrationSet(self.classes[index], self.outputs[index], self.n_classes)


@dataclass(frozen=True)
class MixtureComponent:
    """One term ``q * A(c | alpha) * B(y | mu, sigma)``."""

    weight: float
    class_params: tuple[float, ...]
    means: tuple[float, ...]
    stddevs: tuple[float, ...]

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("negative component weight")
        if min(self.class_params) < 0 or abs(math.fsum(self.class_params) - 1) > 1e-12:
            raise ValueError("class parameters must lie on the simplex")
        if len(self.means) != len(self.stddevs):
            raise DimensionError("means and stddevs differ in length")
        if min(self.stddevs) <= 0:
            raise ValueError("stddevs must be positive")


@dataclass(frozen=True)
class FrequencySample:
    components: tuple[MixtureComponent, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("a frequency sample needs at least one component")
        if abs(math.fsum(c.weight for c in self.components) - 1) > 1e-10:
            raise ValueError("component weights must sum to 1")


class TransducerModel:
    """Posterior mixture samples; immutable after construction.

    Parameters
    ----------
    weights : array, shape (T, K)
        Per-sample mixture weights, each row summing to 1.
    class_params : array, shape (T, K, C)
        Categorical class distribution of each component.
    means, stddevs : arrays, shape (T, K, d)
        Gaussian output kernel parameters per component and dimension.
    provenance : dict, optional
        Fit configuration, seed, data digest and data summary.

    Notes
    -----
    Pooled quantities always sum over terms in sample-major,
    component-minor order, so results are bit-reproducible for a given
    set of parameter arrays.
    """

    def __init__(self, weights, class_params, means, stddevs, provenance=None):
        weights = np.array(weights, dtype=float)
        class_params = np.array(class_params, dtype=float)
        means = np.array(means, dtype=float)
        stddevs = np.array(stddevs, dtype=float)
        if weights.ndim != 2:
            raise DimensionError("weights must have shape (T, K)")
        T, K = weights.shape
        if class_params.ndim != 3 or class_params.shape[:2] != (T, K):
            raise DimensionError("class_params must have shape (T, K, C)")
        if means.ndim != 3 or means.shape[:2] != (T, K) or means.shape != stddevs.shape:
            raise DimensionError("means and stddevs must have shape (T, K, d)")
        if class_params.shape[2] < 2:
            raise DimensionError("need at least two classes")
        if T == 0 or K == 0:
            raise EmptyDataError("model has no components")
        if np.any(weights < 0) or np.any(np.abs(weights.sum(axis=1) - 1) > 1e-10):
            raise ValueError("per-sample weights must be non-negative and sum to 1")
        if np.any(class_params < 0) or np.any(np.abs(class_params.sum(axis=2) - 1) > 1e-12):
            raise ValueError("class parameters must lie on the simplex")
        if not (np.all(np.isfinite(means)) and np.all(stddevs > 0) and np.all(np.isfinite(stddevs))):
            raise ValueError("means must be finite and stddevs positive")
        for arr in (weights, class_params, means, stddevs):
            arr.setflags(write=False)
        self.weights = weights
        self.class_params = class_params
        self.means = means
        self.stddevs = stddevs
        self.provenance = dict(provenance or {})

        n_terms = T * K
        with np.errstate(divide="ignore"):
            self._log_q = np.log(weights.reshape(n_terms)) - math.log(T)
            self._log_alpha = np.log(class_params.reshape(n_terms, -1))
        self._alpha = class_params.reshape(n_terms, -1)
        self._mu = means.reshape(n_terms, -1)
        self._sigma = stddevs.reshape(n_terms, -1)
        self._log_norm = (
            -0.5 * self.y_dim * _LOG_2PI - np.log(self._sigma).sum(axis=1) + self._log_q
        )

    @classmethod
    def from_samples(cls, samples: Sequence[FrequencySample], provenance=None):
        samples = list(samples)
        K = {len(s.components) for s in samples}
        if len(K) != 1:
            raise DimensionError("every sample must have the same number of components")
        return cls(
            [[c.weight for c in s.components] for s in samples],
            [[c.class_params for c in s.components] for s in samples],
            [[c.means for c in s.components] for s in samples],
            [[c.stddevs for c in s.components] for s in samples],
            provenance=provenance,
        )

    # -- shape -----------------------------------------------------------

    @property
    def n_samples(self) -> int:
        return self.weights.shape[0]

    @property
    def n_components(self) -> int:
        return self.weights.shape[1]

    @property
    def n_classes(self) -> int:
        return self.class_params.shape[2]

    @property
    def y_dim(self) -> int:
        return self.means.shape[2]

    @property
    def samples(self) -> list[FrequencySample]:
        return [self.sample(t) for t in range(self.n_samples)]

    def sample(self, t: int) -> FrequencySample:
        self._check_sample_index(t)
        return FrequencySample(
            tuple(
                MixtureComponent(
                    float(self.weights[t, k]),
                    tuple(self.class_params[t, k].tolist()),
                    tuple(self.means[t, k].tolist()),
                    tuple(self.stddevs[t, k].tolist()),
                )
                for k in range(self.n_components)
            )
        )

    def subset(self, index) -> "TransducerModel":
        """Model made of the selected posterior samples only."""
        index = np.atleast_1d(np.arange(self.n_samples)[index])
        return TransducerModel(
            self.weights[index],
            self.class_params[index],
            self.means[index],
            self.stddevs[index],
            provenance=self.provenance,
        )

    def __eq__(self, other):
        if not isinstance(other, TransducerModel):
            return NotImplemented
        return all(
            np.array_equal(a, b)
            for a, b in (
                (self.weights, other.weights),
                (self.class_params, other.class_params),
                (self.means, other.means),
                (self.stddevs, other.stddevs),
            )
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"TransducerModel(T={self.n_samples}, K={self.n_components}, "
            f"C={self.n_classes}, d={self.y_dim})"
        )

    # -- input handling --------------------------------------------------

    def _as_outputs(self, y) -> tuple[np.ndarray, bool]:
        """Coerce ``y`` to shape (n, d); flag whether it was a single point."""
        y = np.asarray(y, dtype=float)
        d = self.y_dim
        if y.ndim == 0:
            if d != 1:
                raise DimensionError(f"scalar output given to a model with d={d}")
            y, single = y.reshape(1, 1), True
        elif y.ndim == 1:
            if d == 1:
                y, single = y[:, None], False
            elif y.shape[0] == d:
                y, single = y[None, :], True
            else:
                raise DimensionError(f"output of length {y.shape[0]}, model has d={d}")
        elif y.ndim == 2:
            if y.shape[1] != d:
                raise DimensionError(f"outputs have {y.shape[1]} columns, model has d={d}")
            single = False
        else:
            raise DimensionError("outputs must be at most 2-D")
        if not np.all(np.isfinite(y)):
            raise InvalidOutputError("classifier outputs must be finite")
        return y, single

    def _check_class(self, c) -> int:
        if isinstance(c, (bool, np.bool_)) or int(c) != c or not 0 <= int(c) < self.n_classes:
            raise DimensionError(f"class {c!r} out of range for {self.n_classes} classes")
        return int(c)

    def _check_sample_index(self, t):
        if not 0 <= t < self.n_samples or int(t) != t:
            raise IndexError(f"sample index {t} out of range for T={self.n_samples}")

    def _chunks(self, n):
        step = max(1, _CHUNK_ELEMENTS // self._log_q.shape[0])
        for start in range(0, n, step):
            yield slice(start, min(n, start + step))

    # -- kernels ---------------------------------------------------------

    def _log_terms(self, y: np.ndarray) -> np.ndarray:
        """log(q/T) + log B(y | beta) for every pooled term, shape (n, T*K)."""
        z = (y[:, None, :] - self._mu[None]) / self._sigma[None]
        return self._log_norm[None] - 0.5 * (z * z).sum(axis=2)

    def _scaled_joint(self, y: np.ndarray):
        """Return (log_scale, s) with joint(c, y) = exp(log_scale) * s[:, c].

        Also returns the scaled marginal sum over terms.
        """
        n = y.shape[0]
        log_scale = np.empty(n)
        s = np.empty((n, self.n_classes))
        total = np.empty(n)
        for sl in self._chunks(n):
            lt = self._log_terms(y[sl])
            m = lt.max(axis=1)
            e = np.exp(lt - m[:, None])
            log_scale[sl] = m
            total[sl] = e.sum(axis=1)
            for c in range(self.n_classes):
                s[sl, c] = (e * self._alpha[:, c]).sum(axis=1)
        return log_scale, s, total

    def _per_sample_scaled(self, y: np.ndarray):
        """Per-sample analogue of ``_scaled_joint``.

        Returns log_scale (n, T), s (n, T, C) and total (n, T), where
        sample t's own joint is ``T * exp(log_scale) * s`` (the pooled
        weights carry the 1/T factor).
        """
        n, T, K = y.shape[0], self.n_samples, self.n_components
        log_scale = np.empty((n, T))
        s = np.empty((n, T, self.n_classes))
        total = np.empty((n, T))
        alpha = self._alpha.reshape(T, K, -1)
        for sl in self._chunks(n):
            lt = self._log_terms(y[sl]).reshape(-1, T, K)
            m = lt.max(axis=2)
            e = np.exp(lt - m[:, :, None])
            log_scale[sl] = m
            total[sl] = e.sum(axis=2)
            for c in range(self.n_classes):
                s[sl, :, c] = (e * alpha[None, :, :, c]).sum(axis=2)
        return log_scale, s, total

    # -- probabilities ---------------------------------------------------

    def joint_density(self, c, y):
        """Joint density p(c, y) of class ``c`` and output ``y``."""
        c = self._check_class(c)
        y, single = self._as_outputs(y)
        log_scale, s, _ = self._scaled_joint(y)
        out = np.exp(log_scale) * s[:, c]
        return float(out[0]) if single else out

    def marginal_class(self, c=None):
        """p(c); all classes as a vector when ``c`` is None."""
        pooled = (self.weights[:, :, None] * self.class_params).reshape(-1, self.n_classes)
        probs = pooled.sum(axis=0) / self.n_samples
        if c is None:
            return probs
        return float(probs[self._check_class(c)])

    def marginal_output(self, y):
        y, single = self._as_outputs(y)
        log_scale, _, total = self._scaled_joint(y)
        out = np.exp(log_scale) * total
        return float(out[0]) if single else out

    def log_marginal_output(self, y):
        y, single = self._as_outputs(y)
        log_scale, _, total = self._scaled_joint(y)
        out = log_scale + np.log(total)
        return float(out[0]) if single else out

    def conditional_class(self, y):
        """Class probabilities given the output, p(c | y).

        This is the exchangeable-output form: the pooled joint divided by
        the pooled output marginal. Returns shape (C,) for one output and
        (n, C) for a batch.
        """
        y, single = self._as_outputs(y)
        _, s, _ = self._scaled_joint(y)
        p = s / s.sum(axis=1, keepdims=True)
        return p[0] if single else p

    def conditional_class_nonexchangeable(self, y):
        """Average over samples of each sample's own p_t(c | y).

        Use when new outputs are not representative of the calibration
        outputs; does not update the output distribution on ``y``.
        """
        y, single = self._as_outputs(y)
        p = self._per_sample_conditionals(y).mean(axis=1)
        return p[0] if single else p

    def _per_sample_conditionals(self, y):
        _, s, _ = self._per_sample_scaled(y)
        return s / s.sum(axis=2, keepdims=True)

    def per_sample_conditional(self, t: int, y):
        """p_t(c | y) of posterior sample ``t`` alone."""
        self._check_sample_index(t)
        return self.subset([t]).conditional_class(y)

    def per_sample_curves(self, y, kind="class-conditional", c=None):
        """Curves of every posterior sample on a batch of outputs.

        ``kind="class-conditional"`` gives p_t(c | y) with shape
        (n, T, C); ``kind="generative"`` gives p_t(y | c) for class ``c``
        with shape (n, T).
        """
        y, _ = self._as_outputs(y)
        if kind == "class-conditional":
            return self._per_sample_conditionals(y)
        if kind != "generative":
            raise ValueError(f"unknown curve kind {kind!r}")
        if c is None:
            raise ValueError("generative curves need a class")
        c = self._check_class(c)
        log_scale, s, _ = self._per_sample_scaled(y)
        class_mass = (self.weights * self.class_params[:, :, c]).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.n_samples * np.exp(log_scale) * s[:, :, c] / class_mass[None, :]
        return out

    def per_sample_marginal_output(self, y):
        """p_t(y) for every sample, shape (n, T)."""
        y, _ = self._as_outputs(y)
        log_scale, _, total = self._per_sample_scaled(y)
        return self.n_samples * np.exp(log_scale) * total

    def conditional_output(self, c, y):
        """Generative density p(y | c)."""
        c = self._check_class(c)
        pc = self.marginal_class(c)
        if pc <= 0:
            raise UndefinedConditionalError(f"class {c} has zero probability")
        y, single = self._as_outputs(y)
        log_scale, s, _ = self._scaled_joint(y)
        out = np.exp(log_scale) * s[:, c] / pc
        return float(out[0]) if single else out

    def reweight_with_prevalence(self, y, prevalence):
        """Class probabilities for a population with class prevalences ``r``.

        p(c | y, r) = p(y | c) r_c / sum_c' p(y | c') r_c'. The generative
        densities p(y | c) are assumed unchanged across populations.
        """
        r = np.asarray(prevalence, dtype=float)
        if r.shape != (self.n_classes,):
            raise DimensionError(f"prevalence needs {self.n_classes} entries")
        if np.any(r < 0) or abs(r.sum() - 1) > 1e-12:
            raise ValueError("prevalences must be non-negative and sum to 1")
        pc = self.marginal_class()
        if np.any((pc <= 0) & (r > 0)):
            raise UndefinedConditionalError(
                "a class with positive prevalence has zero probability in the model"
            )
        y, single = self._as_outputs(y)
        _, s, _ = self._scaled_joint(y)
        factor = np.zeros_like(pc)
        np.divide(r, pc, out=factor, where=r > 0)
        num = s * factor[None, :]
        den = num.sum(axis=1, keepdims=True)
        if np.any(den <= 0):
            raise UndefinedConditionalError("all reweighted class densities vanish")
        p = num / den
        return p[0] if single else p

    def log_likelihood(self, data: CalibrationSet) -> float:
        """Sum over records of log p(c_i, y_i) under the pooled model."""
        y, _ = self._as_outputs(data.outputs)
        log_scale, s, _ = self._scaled_joint(y)
        with np.errstate(divide="ignore"):
            return float(np.sum(log_scale + np.log(s[np.arange(len(data)), data.classes])))
