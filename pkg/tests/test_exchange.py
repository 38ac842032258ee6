"""Estimator exchange format: round trip, integrity, compatibility."""

import hashlib
import json

import numpy as np
import pytest

from fcqr.basis import make_basis
from fcqr.cqr import build_grid, fit_sequential
from fcqr.errors import FormatError
from fcqr.exchange import export_estimator, import_estimator

from conftest import synth_cohort


@pytest.fixture(scope="module")
def fitted():
    cohort = synth_cohort(40, seed=21, censor=0.1)
    grid = build_grid(0.5, 0.1)
    return fit_sequential(cohort, [make_basis(4, 1, (0.0, 1.0))], grid)


def test_round_trip(fitted):
    back = import_estimator(export_estimator(fitted))
    assert np.allclose(back.gamma, fitted.gamma)
    assert np.allclose(back.grid.levels, fitted.grid.levels)
    assert back.q == fitted.q
    assert back.bases[0].order == fitted.bases[0].order
    assert np.allclose(back.bases[0].domain, fitted.bases[0].domain)
    assert back.meta["label"] == fitted.meta["label"]
    assert back.meta["n"] == fitted.meta["n"]


def test_corruption_detected(fitted):
    blob = bytearray(export_estimator(fitted))
    # flip a digit inside the gamma payload without breaking the JSON syntax
    text = blob.decode()
    idx = text.index('"gamma"')
    for i in range(idx, len(text)):
        if text[i].isdigit():
            text = text[:i] + ("1" if text[i] != "1" else "2") + text[i + 1 :]
            break
    with pytest.raises(FormatError):
        import_estimator(text.encode())


def test_not_json_raises(fitted):
    with pytest.raises(FormatError):
        import_estimator(b"\x00\x01garbage")


def test_newer_version_rejected(fitted):
    payload = json.loads(export_estimator(fitted))
    payload["format_version"] = 99
    with pytest.raises(FormatError):
        import_estimator(json.dumps(payload).encode())


def _reseal(payload: dict) -> bytes:
    body = {k: v for k, v in payload.items() if k != "checksum"}
    canonical = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    payload["checksum"] = hashlib.sha256(canonical).hexdigest()
    return json.dumps(payload).encode()


def test_unknown_field_warns_but_loads(fitted):
    payload = json.loads(export_estimator(fitted))
    payload["future_extension"] = {"x": 1}
    with pytest.warns(UserWarning):
        back = import_estimator(_reseal(payload))
    assert np.allclose(back.gamma, fitted.gamma)
