#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""
Binary array files and their JSON sidecars.

Arrays are written as `.npz` archives with fixed member timestamps, so identical arrays give identical bytes.
Everything that varies between runs (creation time) lives in the sidecar `<file>.json`.
"""

from datetime import datetime
from functools import lru_cache
from importlib import metadata
from pathlib import Path
from typing import Dict, Union
import hashlib
import json
import zipfile

import numpy as np
import pytz

from bayesian_outage_rates.exceptions import SchemaError

SCHEMA_VERSION = 1
DISTRIBUTION = "bayesian-outage-rates"
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def package_version() -> str:
    try:
        return metadata.version(DISTRIBUTION)
    except metadata.PackageNotFoundError:
        return "0+unknown"


@lru_cache(maxsize=1)
def build_hash() -> str:
    """SHA-256 over the package sources, in path order."""
    root = Path(__file__).parent
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*.py")):
        digest.update(path.relative_to(root).as_posix().encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_sidecar(path: Union[str, Path], **metadata_fields) -> Path:
    sidecar = dict(
        schema_version=SCHEMA_VERSION,
        package_version=package_version(),
        build_hash=build_hash(),
        created=datetime.now(pytz.utc).isoformat(),
        file=Path(path).name,
    )
    sidecar.update(metadata_fields)
    target = sidecar_path(path)
    target.write_text(json.dumps(sidecar, indent=2, sort_keys=True, default=_json_default))
    return target


def read_sidecar(path: Union[str, Path]) -> dict:
    target = sidecar_path(path)
    if not target.exists():
        raise SchemaError(f"Sidecar {target} is missing")
    data = json.loads(target.read_text())
    check_schema(data, str(target))
    return data


def check_schema(data: dict, source: str = "input") -> None:
    version = data.get("schema_version")
    if version is None:
        raise SchemaError(f"{source} has no schema_version")
    if int(version) > SCHEMA_VERSION:
        raise SchemaError(f"{source} has schema_version {version}; this build reads up to {SCHEMA_VERSION}")


def write_json(path: Union[str, Path], data: dict) -> None:
    payload = dict(schema_version=SCHEMA_VERSION)
    payload.update(data)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))


def read_json(path: Union[str, Path]) -> dict:
    data = json.loads(Path(path).read_text())
    check_schema(data, str(path))
    return data


def save_arrays(path: Union[str, Path], arrays: Dict[str, np.ndarray]) -> Path:
    """Write an uncompressed `.npz` whose bytes depend only on the arrays."""
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_name(path.name + ".npz")
    with zipfile.ZipFile(path, mode="w", compression=zipfile.ZIP_STORED, allowZip64=True) as archive:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_EPOCH)
            with archive.open(info, mode="w", force_zip64=True) as member:
                np.lib.format.write_array(member, np.asarray(arrays[name]), allow_pickle=False)
    return path


def load_arrays(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    with np.load(path, allow_pickle=False) as data:
        return {name: data[name] for name in data.files}


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (Path, datetime)):
        return str(value)
    if isinstance(value, (set, frozenset)):
        return list(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
