"""Image and manifest files.

Float CSV is the lossless format: one image row per line, comma-separated,
each value written with ``repr`` (shortest round-trip decimal). PGM (binary P5,
maxval 255) is an 8-bit preview, min-max scaled; the scaling goes into the
run manifest.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
from pathlib import Path

import numpy as np

MANIFEST_SCHEMA = "sik.manifest/1"


class ParseError(ValueError):
    """Malformed input file; the message carries the location."""


def write_image_csv(path, image) -> Path:
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("image must be 2D")
    path = Path(path)
    lines = [",".join(repr(float(v)) for v in row) for row in image]
    path.write_text("\n".join(lines) + "\n", newline="\n")
    return path


def read_image_csv(path) -> np.ndarray:
    path = Path(path)
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            row = []
            offset = 0
            for col, field in enumerate(line.split(","), start=1):
                try:
                    v = float(field)
                except ValueError:
                    raise ParseError(
                        f"{path}: line {lineno}, column {col} (offset {offset}): "
                        f"cannot parse {field.strip()!r} as a number"
                    ) from None
                if not math.isfinite(v):
                    raise ParseError(
                        f"{path}: line {lineno}, column {col} (offset {offset}): "
                        f"non-finite value {field.strip()!r}"
                    )
                row.append(v)
                offset += len(field) + 1
            if rows and len(row) != len(rows[0]):
                raise ParseError(
                    f"{path}: line {lineno}: expected {len(rows[0])} values, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no data")
    return np.array(rows, dtype=float)


def pgm_scaling(image) -> tuple[float, float]:
    image = np.asarray(image, dtype=float)
    return float(image.min()), float(image.max())


def write_pgm(path, image) -> dict:
    """Write an 8-bit binary PGM preview; returns the ``{min, max}`` used."""
    image = np.asarray(image, dtype=float)
    lo, hi = pgm_scaling(image)
    span = hi - lo
    if span > 0:
        scaled = np.rint((image - lo) / span * 255.0)
    else:
        scaled = np.zeros_like(image)
    data = np.clip(scaled, 0, 255).astype(np.uint8)
    h, w = data.shape
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
    return {"min": lo, "max": hi}


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 PGM into floats in ``[0, 1]``."""
    path = Path(path)
    raw = path.read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: truncated PGM header at offset {pos}")
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ParseError(f"{path}: offset 0: expected magic 'P5', got {tokens[0]!r}")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError(f"{path}: malformed PGM header {tokens[1:]!r}") from None
    if not 0 < maxval < 256:
        raise ParseError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    pos += 1
    body = raw[pos : pos + w * h]
    if len(body) != w * h:
        raise ParseError(f"{path}: offset {pos}: expected {w * h} pixel bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w) / float(maxval)


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    return read_image_csv(path)


def write_image(prefix, image) -> tuple[list[Path], dict]:
    """Write ``<prefix>.csv`` and ``<prefix>.pgm``; returns paths and PGM scaling."""
    prefix = Path(prefix)
    csv_path = write_image_csv(prefix.with_name(prefix.name + ".csv"), image)
    pgm_path = prefix.with_name(prefix.name + ".pgm")
    scaling = write_pgm(pgm_path, image)
    return [csv_path, pgm_path], {pgm_path.name: scaling}


def write_profiles_csv(path, columns: dict) -> Path:
    """Write equal-length named columns, with a leading ``index`` column."""
    names = list(columns)
    n = len(next(iter(columns.values())))
    lines = [",".join(["index"] + names)]
    for i in range(n):
        lines.append(",".join([str(i)] + [repr(float(columns[k][i])) for k in names]))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", newline="\n")
    return path


def write_manifest(path, command: str, argv, config: dict, inputs: dict, outputs, seeds: dict,
                   extra: dict | None = None) -> Path:
    """Write a run manifest (JSON). See README for the schema."""
    from sik import __version__

    doc = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "argv": list(argv),
        "config": config,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": sorted(str(p) for p in outputs),
        "seeds": seeds,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        doc.update(extra)
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path
