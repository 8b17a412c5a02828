"""Suite-wide fixtures."""

from __future__ import annotations

import pytest

import py_stgcsvr.forecaster as forecaster_module
from tests.utils import assert_certified


@pytest.fixture(autouse=True)
def certified_svrs(monkeypatch: pytest.MonkeyPatch):
    """Check every per-station SVR the pipeline trains against the epsilon-KKT conditions."""
    original = forecaster_module.train_svr

    def certified(inputs, targets, config=None, **kwargs):
        model = original(inputs, targets, config, **kwargs)
        assert_certified(model)
        return model

    monkeypatch.setattr(forecaster_module, "train_svr", certified)
