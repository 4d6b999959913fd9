import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src"))

from services.lattice_service import build_hex_lattice  # noqa: E402
from services.material_service import (  # noqa: E402
    build_example_perturbation,
    build_example_weight,
    identity_weight,
)

# Reduced truncation keeps dense solves fast
TEST_TRUNCATION = 4
TEST_QUADRATURE = 32


@pytest.fixture(scope="session")
def lattice():
    return build_hex_lattice()


@pytest.fixture(scope="session")
def example_weight():
    return build_example_weight()


@pytest.fixture(scope="session")
def example_perturbation():
    return build_example_perturbation()


@pytest.fixture(scope="session")
def unit_weight():
    return identity_weight()


@pytest.fixture(scope="session")
def example_dirac(example_weight, example_perturbation):
    """Dirac data of the example weight at reduced truncation, without the conical fit."""
    import asyncio

    from services.dirac_service import DiracService

    service = DiracService(truncation=TEST_TRUNCATION, quadrature=TEST_QUADRATURE)
    return asyncio.run(service.analyze(example_weight, example_perturbation, fit=False))
