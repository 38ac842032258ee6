"""Estimator exchange format: the only object ever shared between cohorts.

Versioned, self-describing JSON with a sha256 checksum.  Unknown fields
added by newer writers are tolerated with a warning.
"""

from __future__ import annotations

import hashlib
import json
import warnings

import numpy as np

from .basis import SplineBasis
from .cqr import CoefficientSurface, QuantileGrid
from .errors import FormatError

__all__ = ["export_estimator", "import_estimator", "FORMAT_VERSION"]

FORMAT_VERSION = 1

_KNOWN_FIELDS = {
    "format_version",
    "label",
    "n",
    "q",
    "bases",
    "grid_levels",
    "gamma",
    "meta",
    "checksum",
}


def _canonical(payload: dict) -> bytes:
    body = {k: v for k, v in payload.items() if k != "checksum"}
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()


def export_estimator(fit: CoefficientSurface) -> bytes:
    meta = dict(fit.meta)
    payload = {
        "format_version": FORMAT_VERSION,
        "label": meta.get("label", ""),
        "n": meta.get("n", 0),
        "q": fit.q,
        "bases": [
            {"order": b.order, "n_interior": b.n_interior, "domain": list(b.domain)}
            for b in fit.bases
        ],
        "grid_levels": fit.grid.levels.tolist(),
        # row-major [d][j][l]
        "gamma": [
            fit.gamma[:, fit._slice(d)].tolist() for d in range(1, fit.q + 1)
        ],
        "meta": {k: v for k, v in meta.items() if k not in ("label", "n")},
    }
    payload["checksum"] = hashlib.sha256(_canonical(payload)).hexdigest()
    return json.dumps(payload, sort_keys=True, indent=1).encode()


def import_estimator(data: bytes) -> CoefficientSurface:
    try:
        payload = json.loads(data.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupted estimator payload: {exc}") from exc
    if not isinstance(payload, dict):
        raise FormatError("estimator payload is not a JSON object")

    version = payload.get("format_version")
    if version is None:
        raise FormatError("estimator payload missing format_version")
    if int(version) > FORMAT_VERSION:
        raise FormatError(
            f"estimator format version {version} is newer than supported {FORMAT_VERSION}"
        )

    checksum = payload.get("checksum")
    if checksum is None:
        raise FormatError("estimator payload missing checksum")
    expected = hashlib.sha256(_canonical(payload)).hexdigest()
    if checksum != expected:
        raise FormatError("estimator payload checksum mismatch")

    unknown = set(payload) - _KNOWN_FIELDS
    if unknown:
        warnings.warn(
            f"estimator payload carries unknown fields {sorted(unknown)}; ignoring",
            stacklevel=2,
        )

    try:
        bases = tuple(
            SplineBasis(
                order=int(b["order"]),
                n_interior=int(b["n_interior"]),
                domain=(float(b["domain"][0]), float(b["domain"][1])),
            )
            for b in payload["bases"]
        )
        grid = QuantileGrid(levels=np.asarray(payload["grid_levels"], dtype=float))
        gamma = np.hstack([np.asarray(g, dtype=float) for g in payload["gamma"]])
        meta = dict(payload.get("meta", {}))
        meta["label"] = payload.get("label", "")
        meta["n"] = payload.get("n", 0)
        surface = CoefficientSurface(bases=bases, grid=grid, gamma=gamma, meta=meta)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FormatError(f"malformed estimator payload: {exc}") from exc
    return surface
