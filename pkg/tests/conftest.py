import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cfmimo.closed_form_se import build_cache
from cfmimo.config import SystemConfig, hardware_profile
from cfmimo.scenario import build_scenario

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def small_config(profile="ideal", **kw):
    base = dict(M=3, K=3, N=2, tau_c=20, tau_p=2, seed=3, velocities=128 / 3.6)
    base.update(kw)
    return hardware_profile(SystemConfig(**base), profile)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk_cache():
    cfg = SystemConfig(velocities=212 / 3.6)
    return build_cache(build_scenario(cfg))


@pytest.fixture(scope="session")
def impaired_cache():
    cfg = hardware_profile(SystemConfig(M=6, K=5, tau_p=2, tau_c=30, seed=7,
                                        velocities=[0, 54 / 3.6, 128 / 3.6, 212 / 3.6, 30.0]),
                           "rf_dynamic_adc")
    return build_cache(build_scenario(cfg))


def random_psd(rng, N, scale=1.0):
    B = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    return scale * B @ B.conj().T / N


def sample_cov(x):
    """E{x x^H} for samples along axis 0."""
    return np.einsum("ti,tj->ij", x, x.conj()) / len(x)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line per acceptance criterion; returns ``ok``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(tag, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {tag}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
