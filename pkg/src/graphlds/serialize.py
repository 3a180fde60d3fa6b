"""Versioned on-disk containers for ensembles, bundles, and estimates.

NumPy .npz archives with an explicit format tag, schema version, and
(m, d, T) header fields; matrices are stored row-major. Loading rejects
unknown formats and versions.
"""

from __future__ import annotations

import json

import numpy as np

from .ensembles import EnsembleMeta, SystemEnsemble, TrajectoryBundle
from .estimators import EstimateSet

FORMAT_VERSION = 1


def _check_header(data, expected_format: str, path):
    fmt = str(data.get("format", ""))
    if fmt != expected_format:
        raise ValueError(f"{path}: expected format {expected_format!r}, found {fmt!r}")
    version = int(data["version"])
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version} (expected {FORMAT_VERSION})")


def save_ensemble(path, e: SystemEnsemble) -> None:
    meta = e.meta or EnsembleMeta()
    np.savez(
        path,
        format="graphlds.ensemble",
        version=FORMAT_VERSION,
        m=e.m,
        d=e.d,
        mats=np.ascontiguousarray(e.mats),
        beta=np.nan if meta.beta is None else float(meta.beta),
        s_m=np.nan if meta.s_m is None else float(meta.s_m),
        normalized=bool(meta.normalized),
    )


def load_ensemble(path) -> SystemEnsemble:
    with np.load(path, allow_pickle=False) as data:
        _check_header(data, "graphlds.ensemble", path)
        mats = data["mats"]
        if mats.shape[0] != int(data["m"]) or mats.shape[1] != int(data["d"]):
            raise ValueError(f"{path}: header (m, d) does not match stored matrices")
        beta = float(data["beta"])
        s_m = float(data["s_m"])
        meta = EnsembleMeta(
            beta=None if np.isnan(beta) else beta,
            s_m=None if np.isnan(s_m) else s_m,
            normalized=bool(data["normalized"]),
        )
    return SystemEnsemble(mats=mats, meta=meta)


def save_bundle(path, b: TrajectoryBundle) -> None:
    np.savez(
        path,
        format="graphlds.bundle",
        version=FORMAT_VERSION,
        m=b.m,
        d=b.d,
        T=b.horizon,
        states=np.ascontiguousarray(b.states),
        # seeds may exceed 64 bits; strings round-trip any int
        seed="" if b.seed is None else str(b.seed),
    )


def load_bundle(path) -> TrajectoryBundle:
    with np.load(path, allow_pickle=False) as data:
        _check_header(data, "graphlds.bundle", path)
        states = data["states"]
        header = (int(data["m"]), int(data["d"]), int(data["T"]) + 1)
        if states.shape != header:
            raise ValueError(f"{path}: header (m, d, T) does not match stored states")
        seed_str = str(data["seed"])
        seed = None if seed_str == "" else int(seed_str)
    return TrajectoryBundle(states=states, seed=seed)


def save_estimates(path, est: EstimateSet) -> None:
    np.savez(
        path,
        format="graphlds.estimates",
        version=FORMAT_VERSION,
        m=est.m,
        d=est.d,
        mats=np.ascontiguousarray(est.mats),
        diagnostics=json.dumps(est.diagnostics, sort_keys=True),
    )


def load_estimates(path) -> EstimateSet:
    with np.load(path, allow_pickle=False) as data:
        _check_header(data, "graphlds.estimates", path)
        mats = data["mats"]
        diagnostics = json.loads(str(data["diagnostics"]))
    return EstimateSet(mats=mats, diagnostics=diagnostics)
