import pytest

from triphoton import database
from triphoton.cli import run_evolution
from triphoton.config import SimConfig


@pytest.fixture(scope="session")
def reference_run():
    """Reference parameters, |e,0,0,0> initial state, default truncations,
    evolved once to t*kappa = 0.5."""

    config = SimConfig()
    space, liouvillian, schedule, trajectory = run_evolution(config)
    return config, space, trajectory


@pytest.fixture(scope="function")
def session_db(tmp_path):
    db = tmp_path / "test.db"
    s = database.create_session(str(db))
    yield s, db

    s.close()
