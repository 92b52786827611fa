from __future__ import annotations

import copy
from pathlib import Path

import pytest

from cloudline.feature_model import parse_feature_model

DATA_DIR = Path(__file__).parent / "data"

FIG1_DOC = {
    "model_id": "Fig1",
    "provider_id": "AcmeCloud",
    "layer": "IaaS",
    "features": [
        {"id": "IaaS", "name": "IaaS"},
        {
            "id": "OS",
            "name": "OS",
            "parent": "IaaS",
            "variation": "mandatory",
            "group": {"min": 1, "max": 1, "members": ["Linux", "Windows"]},
        },
        {"id": "IDE", "name": "IDE", "parent": "IaaS", "variation": "optional"},
        {"id": "Linux", "name": "Linux", "parent": "OS"},
        {"id": "Windows", "name": "Windows", "parent": "OS"},
    ],
    "constraints": [],
}


@pytest.fixture
def fig1_doc():
    return copy.deepcopy(FIG1_DOC)


@pytest.fixture
def fig1():
    return parse_feature_model(copy.deepcopy(FIG1_DOC))


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def glucose_dir() -> Path:
    return DATA_DIR / "glucose"
