import numpy as np
import pytest

from neckflow import (SolveConfig, build_symmetric_disc_example, generate,
                      solve)


@pytest.fixture(scope="session")
def disc_geom():
    return build_symmetric_disc_example(scale=1.0)


@pytest.fixture(scope="session")
def disc_mesh_1e2(disc_geom):
    return generate(disc_geom.with_eps(1e-2), 0.12, 6, seed=0)


@pytest.fixture(scope="session")
def disc_solutions_1e2(disc_geom, disc_mesh_1e2):
    """Solved states for p in {1.3, 2, 3} on the eps=1e-2 disc fixture."""
    g = disc_geom.with_eps(1e-2)
    return {p: solve(disc_mesh_1e2, g, SolveConfig(p=p))
            for p in (1.3, 2.0, 3.0)}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
