"""Artifact files: CSV tables, twin JSON, manifest, and provenance checks.

Every file embeds the config digest: CSVs open with a ``# config_digest=``
comment line, JSON files carry a ``config_digest`` key. Floats are written
with ``repr`` so a read-back reproduces the exact value.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, config_digest, from_dict
from .degradation import FrequencyObservation
from .errors import ProvenanceMismatch, TwinError
from .moe_gp import MoEGPModel

DIGEST_PREFIX = "# config_digest="
MANIFEST = "manifest.json"

OBSERVATION_COLUMNS = ("t_s", "omega_ds", "lambda_re", "sigma0")
TRAINING_COLUMNS = ("t_s", "delta_k_hat", "delta_m_hat", "rejected")
PREDICTION_COLUMNS = ("t_star", "method", "quantity", "mean", "variance", "q025", "q500", "q975",
                      "ground_truth")
RESPONSE_COLUMNS = ("t_star", "band", "delta_m", "delta_k", "omega_ds", "zeta_s", "unphysical")
SMC_COLUMNS = ("step", "gamma", "ess", "resampled", "acceptance_rate")


class ArtifactError(TwinError):
    """An artifact file is missing, malformed, or inconsistent."""


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _csv_text(digest: str, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"{DIGEST_PREFIX}{digest}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_csv(path, columns):
    """Return ``(digest, rows)``; rows are ``(line_number, dict_of_strings)``.

    The digest line is optional (externally produced data); ``digest`` is then None.
    """
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"file not found: {path}")
    lines = path.read_text().splitlines()
    digest, skip = None, 0
    if lines and lines[0].startswith(DIGEST_PREFIX):
        digest, skip = lines[0][len(DIGEST_PREFIX):], 1
    reader = csv.reader(lines[skip:])
    header = next(reader, None)
    if header is None or tuple(header) != tuple(columns):
        raise ArtifactError(f"{path}:{skip + 1}: expected columns {','.join(columns)}")
    rows = []
    for lineno, row in enumerate(reader, start=skip + 2):
        if len(row) != len(columns):
            raise ArtifactError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(row)}")
        rows.append((lineno, dict(zip(columns, row))))
    return digest, rows


def _float(raw: str, path, lineno, column, optional=False):
    if raw == "" and optional:
        return None
    try:
        return float(raw)
    except ValueError:
        raise ArtifactError(f"{path}:{lineno}: column {column!r} is not a number: {raw!r}") from None


# -- observations ----------------------------------------------------------

def observations_text(observations, digest: str) -> str:
    rows = ((o.t_s, o.omega_ds, o.lambda_re, o.sigma0) for o in observations)
    return _csv_text(digest, OBSERVATION_COLUMNS, rows)


def read_observations(path):
    digest, rows = read_csv(path, OBSERVATION_COLUMNS)
    out = []
    for lineno, r in rows:
        try:
            out.append(FrequencyObservation(
                t_s=_float(r["t_s"], path, lineno, "t_s"),
                omega_ds=_float(r["omega_ds"], path, lineno, "omega_ds"),
                lambda_re=_float(r["lambda_re"], path, lineno, "lambda_re", optional=True),
                sigma0=_float(r["sigma0"], path, lineno, "sigma0"),
            ))
        except ValueError as exc:
            raise ArtifactError(f"{path}:{lineno}: {exc}") from None
    return digest, out


def training_text(processed, digest: str) -> str:
    return _csv_text(digest, TRAINING_COLUMNS, processed.rows())


# -- predictions -----------------------------------------------------------

def prediction_rows(forecast, config: ScenarioConfig, simulated: bool):
    from .twin import ground_truth

    for (method, quantity), fc in sorted(forecast.quantities.items()):
        truth = ground_truth(config, quantity, fc.t_star) if simulated else None
        for j, ts in enumerate(fc.t_star):
            q = fc.quantiles[j]
            yield (float(ts), method, quantity, fc.mean[j], fc.variance[j], q[0], q[len(q) // 2],
                   q[-1], None if truth is None else truth[j])


def predictions_text(forecast, config, simulated: bool = True) -> str:
    return _csv_text(config.digest(), PREDICTION_COLUMNS, prediction_rows(forecast, config, simulated))


def responses_text(forecast, digest: str) -> str:
    rows = []
    for r in forecast.responses:
        omega = zeta = None
        if r.modal is not None:
            omega, zeta = r.modal.omega_d, r.modal.zeta
        rows.append((r.t_star, r.band, r.dm, r.dk, omega, zeta, r.unphysical))
    return _csv_text(digest, RESPONSE_COLUMNS, rows)


def em_trace_text(trace, n_experts: int, digest: str) -> str:
    columns = ("iter", "em_error", "expected_log_posterior") + tuple(
        f"pi_{i + 1}" for i in range(n_experts))
    rows = ((it.iteration, it.em_error, it.expected_log_posterior, *it.pi) for it in trace.iterations)
    return _csv_text(digest, columns, rows)


def smc_trace_text(ensemble, digest: str) -> str:
    rows = ((r.step, r.gamma, r.ess, r.resampled, r.acceptance_rate) for r in ensemble.trace)
    return _csv_text(digest, SMC_COLUMNS, rows)


# -- twin JSON -------------------------------------------------------------

def twin_to_dict(twin) -> dict:
    return {
        "schema": twin.schema,
        "config": twin.config.to_dict(),
        "config_digest": twin.config.digest(),
        "last_update_time": twin.last_update_time,
        "simulated": twin.simulated,
        "provenance": list(twin.provenance),
        "observations": [[o.t_s, o.omega_ds, o.lambda_re, o.sigma0] for o in twin.observations],
        "models": [
            {"method": m, "quantity": q, "model": f.model.to_dict()}
            for (m, q), f in sorted(twin.fits.items())
        ],
    }


def dumps_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def load_twin(path):
    from .twin import TWIN_SCHEMA, QuantityFit, TwinState, process

    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"model file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: {exc}") from None
    if payload.get("schema") != TWIN_SCHEMA:
        raise ArtifactError(f"{path}: unsupported twin schema {payload.get('schema')!r}")
    config = from_dict(payload["config"])
    if config.digest() != payload["config_digest"]:
        raise ProvenanceMismatch(f"{path}: config digest does not match embedded config")
    observations = tuple(FrequencyObservation(*row) for row in payload["observations"])
    fits = {}
    for entry in payload["models"]:
        model = MoEGPModel.from_dict(entry["model"])
        fits[(entry["method"], entry["quantity"])] = QuantityFit(entry["method"], entry["quantity"], model)
    return TwinState(
        config=config,
        observations=observations,
        processed=process(observations, config),
        fits=fits,
        provenance=tuple(payload["provenance"]),
        last_update_time=float(payload["last_update_time"]),
        simulated=bool(payload.get("simulated", False)),
    )


# -- bundles ---------------------------------------------------------------

def bundle_files(twin, forecast) -> dict:
    """File name -> text for a complete pipeline run."""
    config = twin.config
    digest = config.digest()
    files = {
        "config.json": dumps_json({"config": config.to_dict(), "config_digest": digest}),
        "observations.csv": observations_text(twin.observations, digest),
        "training.csv": training_text(twin.processed, digest),
        "twin.json": dumps_json(twin_to_dict(twin)),
        "predictions.csv": predictions_text(forecast, config, twin.simulated),
        "response.csv": responses_text(forecast, digest),
    }
    for (method, quantity), f in sorted(twin.fits.items()):
        if f.trace is not None:
            files[f"em_trace_{method}_{quantity}.csv"] = em_trace_text(f.trace, f.model.n_experts, digest)
        files[f"smc_trace_{method}_{quantity}.csv"] = smc_trace_text(f.model.ensemble, digest)
    return files


def manifest_text(files: dict, digest: str) -> str:
    hashes = {name: hashlib.sha256(text.encode()).hexdigest() for name, text in sorted(files.items())}
    return dumps_json({"config_digest": digest, "files": hashes})


def write_files_atomic(out_dir, files: dict, digest: str) -> Path:
    """Write ``files`` plus a manifest into ``out_dir`` as one unit.

    Files are staged in a sibling temp directory and swapped in, so a
    failure never leaves a partially written bundle behind.
    """
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(dir=out_dir.parent, prefix=f".{out_dir.name}.stage-"))
    os.chmod(stage, 0o777 & ~_umask())
    try:
        for name, text in files.items():
            with open(stage / name, "w", newline="") as fh:
                fh.write(text)
        with open(stage / MANIFEST, "w", newline="") as fh:
            fh.write(manifest_text(files, digest))
        old = None
        if out_dir.exists():
            old = Path(tempfile.mkdtemp(dir=out_dir.parent, prefix=f".{out_dir.name}.old-"))
            os.rmdir(old)
            os.replace(out_dir, old)
        os.replace(stage, out_dir)
        if old is not None:
            shutil.rmtree(old)
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    return out_dir


def write_bundle(out_dir, twin, forecast) -> Path:
    return write_files_atomic(out_dir, bundle_files(twin, forecast), twin.config.digest())


def embedded_digest(path) -> str:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".csv":
        first = text.split("\n", 1)[0]
        if not first.startswith(DIGEST_PREFIX):
            raise ProvenanceMismatch(f"{path}: no embedded config digest")
        return first[len(DIGEST_PREFIX):]
    payload = json.loads(text)
    if "config_digest" not in payload:
        raise ProvenanceMismatch(f"{path}: no embedded config digest")
    return payload["config_digest"]


def verify(out_dir) -> list:
    """Check a bundle; return a list of problems (empty when consistent)."""
    out_dir = Path(out_dir)
    problems = []
    manifest_path = out_dir / MANIFEST
    if not manifest_path.is_file():
        return [f"{manifest_path}: missing manifest"]
    manifest = json.loads(manifest_path.read_text())
    expected = manifest.get("config_digest")
    cfg_path = out_dir / "config.json"
    if cfg_path.is_file():
        payload = json.loads(cfg_path.read_text())
        actual = config_digest(payload["config"])
        if actual != expected:
            problems.append(f"{cfg_path}: config digest {actual} != manifest {expected}")
    else:
        problems.append(f"{cfg_path}: missing")
    for name, sha in sorted(manifest.get("files", {}).items()):
        path = out_dir / name
        if not path.is_file():
            problems.append(f"{path}: missing")
            continue
        if hashlib.sha256(path.read_bytes()).hexdigest() != sha:
            problems.append(f"{path}: content hash mismatch")
        try:
            if embedded_digest(path) != expected:
                problems.append(f"{path}: embedded config digest differs from manifest")
        except (ProvenanceMismatch, json.JSONDecodeError) as exc:
            problems.append(str(exc))
    return problems
