import numpy as np
import pytest
from hypothesis import settings

from tacmode.synth import Dome, SceneSpec, gen_scene

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_spec():
    return SceneSpec(w=200, h=160, spacing=30.0, radius=4.0, seed=11)


@pytest.fixture(scope="session")
def small_scene(small_spec):
    return gen_scene(small_spec)


@pytest.fixture(scope="session")
def full_scene():
    spec = SceneSpec(seed=5, shear_amp=6.0, dome=Dome(320, 240, 120))
    return gen_scene(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_mask(rng, h, w, frac=0.1):
    m = rng.random((h, w)) < frac
    m[0, 0] = False  # keep at least one known pixel
    return m


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip("."))):
            terminalreporter.write_line(line)
