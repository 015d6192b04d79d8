import copy
from typing import Any, Dict

import numpy as np
import pytest

from greencomp.ingest import build_instance, interleave
from greencomp.settings import use_settings

_CHANNELS = {
    (0, 0): [1.0, 0.4 + 0.2j],
    (0, 1): [0.8 - 0.1j, 0.6],
    (1, 0): [0.3j, 1.1],
    (1, 1): [0.5, -0.9 + 0.3j],
}


def tiny_document(K: int = 2, epsilon: float = 0.05, gamma: float = 0.1) -> Dict[str, Any]:
    """Two single-antenna BSs over two slots."""
    return {
        "dimensions": {"T": 2, "I": 2, "K": K, "M": 1},
        "prices": {"alpha": [0.4, 1.2], "beta": [0.2, 0.6]},
        "base_stations": [
            {
                "battery": {"C0": 1.0, "Cmax": 4.0, "PbMin": -1.0, "PbMax": 1.0, "varpi": 0.95},
                "Pc": 1.0,
                "PgMax": 6.0,
                "res": {"kind": "polyhedral", "lower": [0.5, 0.5], "upper": [1.5, 1.5],
                        "subhorizons": [{"slots": [0, 1], "e_max": 2.5}]},
            },
            {
                "battery": {"C0": 2.0, "Cmax": 4.0, "PbMin": -1.0, "PbMax": 1.0, "varpi": 0.9},
                "Pc": 1.5,
                "PgMax": 6.0,
                "res": {"kind": "polyhedral", "lower": [0.2, 0.8], "upper": [1.0, 2.0]},
            },
        ],
        "channels": [
            {"user": k, "slot": t, "h": interleave(np.array(_CHANNELS[(k, t)])),
             "epsilon": epsilon, "sigma2": 1.0, "gamma": gamma}
            for k in range(K)
            for t in range(2)
        ],
        "seed": 7,
    }


@pytest.fixture
def tiny_doc():
    return copy.deepcopy(tiny_document())


@pytest.fixture
def tiny_instance():
    return build_instance(tiny_document())


@pytest.fixture(autouse=True)
def _environment_settings():
    yield
    use_settings(None)


@pytest.fixture
def make_document():
    """Factory for variants of the two-BS document."""
    return tiny_document
