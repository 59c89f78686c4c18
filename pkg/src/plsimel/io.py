"""CSV series files, flat JSON configuration and TSV reports.

CSV schema: a header row naming ``y``, ``x1..x{d_X}`` and ``w1..w{d_W}``
(any order), one observation per line, decimal point only.  ``R`` series for
the observed-with-error workflow use a single ``r`` column plus ``w`` columns.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from pathlib import Path

import numpy as np

from .core import ModelSpec, Series, Theta
from .errors import ConfigError, IngestionError
from .kernel import KernelConfig
from .simulate import SimDesign

__all__ = [
    "read_table",
    "read_series_csv",
    "write_series_csv",
    "format_csv",
    "load_config",
    "CONFIG_KEYS",
    "spec_from_config",
    "theta_from_config",
    "kernel_from_config",
    "design_from_config",
    "write_text",
]

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")

SPEC_KEYS = ("family", "d_X", "d_W", "identification", "variance_form")
THETA_KEYS = ("gamma1", "gamma2_free", "beta")
KERNEL_KEYS = ("bandwidth_rule", "h")
DESIGN_KEYS = ("preset", "n", "burn_in", "innovation", "rho_w", "rho0", "seed", "stream")
EXPERIMENT_KEYS = (
    "test", "replications", "alpha", "eta_mode", "train_size", "workers", "skip_errors",
)
CONFIG_KEYS = frozenset(SPEC_KEYS + THETA_KEYS + KERNEL_KEYS + DESIGN_KEYS + EXPERIMENT_KEYS)


def _parse_cell(text: str, row: int, column: str) -> float:
    s = text.strip()
    if not _NUMBER.match(s):
        raise IngestionError(f"non-numeric cell {text!r}", row=row, column=column)
    v = float(s)
    if not math.isfinite(v):
        raise IngestionError("non-finite cell", row=row, column=column)
    return v


def read_table(path) -> dict[str, np.ndarray]:
    """Parse a numeric CSV with a header into named columns.

    Rows are numbered from 1 at the first data line.
    """
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8", newline="")
    except OSError as exc:
        raise IngestionError(f"cannot open {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path} is empty") from None
        if len(set(header)) != len(header):
            raise IngestionError(f"duplicate column names in header {header}")
        cols: list[list[float]] = [[] for _ in header]
        for row, record in enumerate(reader, start=1):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(header):
                raise IngestionError(
                    f"expected {len(header)} fields, found {len(record)}", row=row
                )
            for j, cell in enumerate(record):
                cols[j].append(_parse_cell(cell, row, header[j]))
    return {h: np.asarray(c, dtype=float) for h, c in zip(header, cols)}


def _expected_columns(spec: ModelSpec) -> list[str]:
    return (
        ["y"]
        + [f"x{k}" for k in range(1, spec.d_X + 1)]
        + [f"w{k}" for k in range(1, spec.d_W + 1)]
    )


def check_header(path, spec: ModelSpec) -> None:
    """Compare a file's header with the spec without reading the body."""
    try:
        with Path(path).open("r", encoding="utf-8", newline="") as handle:
            header = [h.strip() for h in next(csv.reader(handle), [])]
    except OSError as exc:
        raise IngestionError(f"cannot open {path}: {exc}") from exc
    expected = _expected_columns(spec)
    if sorted(header) != sorted(expected):
        missing = sorted(set(expected) - set(header))
        extra = sorted(set(header) - set(expected))
        raise IngestionError(
            f"header does not match d_X={spec.d_X}, d_W={spec.d_W}: "
            f"missing {missing}, unexpected {extra}",
            row=0,
        )


def read_series_csv(path, spec: ModelSpec) -> Series:
    check_header(path, spec)
    cols = read_table(path)
    n = cols["y"].size
    x = np.column_stack([cols[f"x{k}"] for k in range(1, spec.d_X + 1)]) if spec.d_X else np.zeros((n, 0))
    w = np.column_stack([cols[f"w{k}"] for k in range(1, spec.d_W + 1)])
    return Series(cols["y"], x, w)


def format_csv(header, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in np.column_stack(columns):
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def write_series_csv(series: Series, path=None) -> None:
    """Write in the CSV schema; ``path=None`` writes to stdout."""
    header = ["y"] + [f"x{k + 1}" for k in range(series.x.shape[1])]
    header += [f"w{k + 1}" for k in range(series.w.shape[1])]
    write_text(format_csv(header, [series.y, series.x, series.w]), path)


def write_text(text: str, path=None) -> None:
    if path is None or str(path) == "-":
        print(text, end="")
    else:
        Path(path).write_text(text, encoding="utf-8")


# --- configuration ---------------------------------------------------------------

def load_config(path) -> dict:
    """Read a flat JSON object; unknown keys are rejected."""
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    nested = [k for k, v in cfg.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat, nested values under {nested}")
    return cfg


def spec_from_config(cfg: dict) -> ModelSpec:
    family = cfg.get("family", "PLSIM")
    d_X, d_W = cfg.get("d_X", 2), cfg.get("d_W", 3)
    ident = cfg.get("identification", "FixFirst")
    try:
        if family == "CHPLSIM":
            return ModelSpec.chplsim(d_X, d_W, cfg.get("variance_form", "ArchLag1"), ident)
        if cfg.get("variance_form") is not None:
            raise ConfigError("variance_form requires family CHPLSIM")
        return ModelSpec.plsim(d_X, d_W, ident)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid model settings: {exc}") from exc


def theta_from_config(cfg: dict, spec: ModelSpec) -> Theta:
    missing = [k for k in ("gamma1", "gamma2_free") if k not in cfg]
    if missing:
        raise ConfigError(f"config lacks {missing}")
    theta = Theta(cfg["gamma1"], cfg["gamma2_free"], cfg.get("beta", []))
    theta.check(spec)
    return theta


def kernel_from_config(cfg: dict) -> KernelConfig:
    rule = cfg.get("bandwidth_rule", "ScaledRate")
    try:
        return KernelConfig(rule, cfg.get("h"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid bandwidth settings: {exc}") from exc


def design_from_config(cfg: dict) -> SimDesign:
    kw = {k: cfg[k] for k in DESIGN_KEYS if k in cfg}
    try:
        return SimDesign(**kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid simulation settings: {exc}") from exc
