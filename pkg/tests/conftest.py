import numpy as np
import pytest

from shelladc.mesh import edge_vectors
from shelladc.remesh import remesh
from shelladc.revolve import RevolutionProfile, cylinder_mesh, revolve_mesh
from shelladc.surfgen import ImplicitSpec, PerturbSpec, generate_implicit, perturb, plane_mesh

BUMPY = "(2+cos(pi*x))/4"


@pytest.fixture(scope="session")
def plane():
    return plane_mesh(32)


@pytest.fixture(scope="session")
def cylinder():
    return cylinder_mesh(0.3, 64, 64)


@pytest.fixture(scope="session")
def bumpy_profile():
    return RevolutionProfile(BUMPY)


@pytest.fixture(scope="session")
def bumpy(bumpy_profile):
    return revolve_mesh(bumpy_profile, 48, 96)


@pytest.fixture(scope="session")
def schwarz_raw():
    return generate_implicit(ImplicitSpec("schwarz-p", resolution=32))


@pytest.fixture(scope="session")
def schwarz(schwarz_raw):
    """Schwarz-P at resolution 32, remeshed to its mean edge length."""
    return remesh(schwarz_raw, float(edge_vectors(schwarz_raw)[1].mean()))


@pytest.fixture(scope="session")
def perturbed(schwarz):
    return perturb(schwarz, PerturbSpec(0.1, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
