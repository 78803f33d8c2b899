import sys
from pathlib import Path

# Add the project root directory to Python path
project_root = str(Path(__file__).parent.parent)
sys.path.insert(0, project_root)

import numpy as np
import pytest

from sov_verify.core.config import get_settings
from sov_verify.services.plane import QuadratureSpec
from sov_verify.services.suites import default_chain


@pytest.fixture(autouse=True)
def fresh_settings():
    """Settings are cached; drop the cache around every test so env overrides apply."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture(scope="session")
def chain1():
    return default_chain(1)


@pytest.fixture(scope="session")
def chain2():
    return default_chain(2)


@pytest.fixture(scope="session")
def chain3():
    return default_chain(3)


@pytest.fixture(scope="session")
def loose_quad():
    """Relaxed single-plane quadrature for tests that compare against closed forms."""
    return QuadratureSpec(abs_tol=1e-7, rel_tol=1e-4, max_evals=2_000_000, outer_cutoff=40.0)
