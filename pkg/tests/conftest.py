import numpy as np
import pytest

from probtransducer import MixtureComponent, SamplerConfig, TransducerModel, fit
from probtransducer.oracle import GeneratorSpec, class_conditional_spec, synth_generate

# Small sampler schedule for tests that need a fitted model but not a
# converged default-size posterior.
FAST = dict(n_components=16, n_samples=256, n_chains=4, burn_in=200, thin=2)


def random_model(rng, T=3, K=4, C=2, d=1):
    """Model with arbitrary (valid) parameters for identity checks."""
    w = rng.dirichlet(np.ones(K), size=T)
    alpha = rng.dirichlet(np.ones(C), size=(T, K))
    mu = rng.normal(0.0, 2.0, size=(T, K, d))
    sd = rng.uniform(0.3, 2.0, size=(T, K, d))
    return TransducerModel(w, alpha, mu, sd)


@pytest.fixture
def unit_model():
    """One sample, one component: alpha = (0.3, 0.7), N(0, 1)."""
    comp = MixtureComponent(1.0, (0.3, 0.7), (0.0,), (1.0,))
    return GeneratorSpec((comp,)).as_model()


@pytest.fixture(scope="session")
def two_gauss_spec():
    return class_conditional_spec({0: [(1.0, -2.0, 1.0)], 1: [(1.0, 2.0, 1.0)]}, (0.5, 0.5), seed=2024)


@pytest.fixture(scope="session")
def small_fit(two_gauss_spec):
    data = synth_generate(two_gauss_spec, 400)
    return data, fit(data, SamplerConfig(seed=7, **FAST))


# -- acceptance report -------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record(number: int, title: str, ok: bool, detail: str) -> None:
    """Log one acceptance criterion's verdict and fail the test if it is red."""
    line = f"AC{number:02d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(line)
    ACCEPTANCE[number] = line
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
