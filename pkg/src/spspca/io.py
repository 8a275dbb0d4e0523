"""CSV ingestion, preprocessing transforms, table export and run manifests."""

from __future__ import annotations

import csv
import json
import logging
import os
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .errors import (
    AllColumnsDropped,
    ConstantColumn,
    InputFileNotFound,
    InvalidConfig,
    NonFinite,
    NonNumericColumn,
    NonPositivePrice,
    RaggedRows,
    TooFewRows,
)

log = logging.getLogger(__name__)

MACHINE_DIGITS = 17
HUMAN_DIGITS = 4
NA_POLICIES = ("strict", "drop-column")
COMMENT = "#"


def _parse(cell: str):
    try:
        return float(cell)
    except ValueError:
        return None


def load_csv(path, header=True, delimiter=",", na_policy="strict"):
    """Read a numeric CSV; returns ``(values n x p, names)``.

    Lines starting with ``#`` are skipped (exported files carry their run
    metadata that way).  A column with any non-numeric cell is an error under
    ``strict`` and is dropped with a warning under ``drop-column``.
    """
    if na_policy not in NA_POLICIES:
        raise InvalidConfig(f"na_policy must be one of {NA_POLICIES}")
    if not os.path.isfile(path):
        raise InputFileNotFound(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter)
                if r and not r[0].startswith(COMMENT)]
    if header:
        if not rows:
            raise TooFewRows(f"{path}: empty file")
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    else:
        names = [f"V{i}" for i in range(1, len(rows[0]) + 1)] if rows else []
    p = len(names)
    for i, r in enumerate(rows):
        if len(r) != p:
            raise RaggedRows(f"{path}: row {i + 1} has {len(r)} fields, expected {p}")
    parsed = [[_parse(c) for c in r] for r in rows]
    keep = [j for j in range(p) if all(r[j] is not None for r in parsed)]
    dropped = [names[j] for j in range(p) if j not in keep]
    if dropped:
        if na_policy == "strict":
            raise NonNumericColumn(f"{path}: non-numeric cells in columns {dropped}")
        if not keep:
            raise AllColumnsDropped(f"{path}: every column has non-numeric cells")
        msg = f"{path}: dropped {len(dropped)} non-numeric column(s): {dropped}"
        warnings.warn(msg, stacklevel=2)
        log.warning(msg)
    values = np.array([[r[j] for j in keep] for r in parsed], dtype=float).reshape(len(parsed), len(keep))
    return values, [names[j] for j in keep]


def log_returns(prices) -> np.ndarray:
    P = np.asarray(prices, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[0] < 2:
        raise TooFewRows("need at least 2 price rows")
    bad = np.argwhere(~(P > 0))
    if bad.size:
        raise NonPositivePrice(int(bad[0, 0]), int(bad[0, 1]))
    return np.diff(np.log(P), axis=0)


def to_correlation(X) -> np.ndarray:
    """Divide each (centered) column by its sample standard deviation."""
    X = np.asarray(X, dtype=float)
    sd = X.std(axis=0, ddof=1)
    if np.any(sd == 0):
        raise ConstantColumn(f"constant columns {np.flatnonzero(sd == 0).tolist()}")
    return X / sd


def preprocess(values, names, center=True, correlation=False, returns=False):
    from .linalg import DataMatrix, center_columns

    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NonFinite("input contains NaN or Inf")
    if returns:
        values = log_returns(values)
    if not center:
        if correlation:
            raise InvalidConfig("--correlation requires centering")
        return DataMatrix(values, centered=False, names=tuple(names))
    X = center_columns(values, names=names)
    if correlation:
        X = DataMatrix(to_correlation(X.values), centered=True, names=X.names)
    return X


# ---------------------------------------------------------------------------
# export

def fmt(x, digits=MACHINE_DIGITS) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    v = float(x)
    if v == 0.0:
        v = 0.0  # no negative zero
    return format(v, f".{digits}g")


def _preamble(fh, meta):
    if meta:
        for key, value in meta.items():
            fh.write(f"{COMMENT} {key}: {json.dumps(value, sort_keys=True)}\n")


def write_table(path, header, rows, digits=MACHINE_DIGITS, meta=None):
    with open(path, "w", newline="") as fh:
        _preamble(fh, meta)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v, digits) for v in row])


def write_matrix(path, M, row_names, col_names, digits=MACHINE_DIGITS, meta=None):
    """One row per variable, one column per component."""
    M = np.asarray(M)
    rows = [[name, *M[i]] for i, name in enumerate(row_names)]
    write_table(path, ["variable", *col_names], rows, digits, meta)


def read_matrix(path):
    """Inverse of :func:`write_matrix`: ``(M, row_names, col_names)``."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith(COMMENT)]
    cols = rows[0][1:]
    names = [r[0] for r in rows[1:]]
    M = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
    return M.reshape(len(names), len(cols)), names, cols


# ---------------------------------------------------------------------------
# run configuration

COMMANDS = ("fit", "simulate", "sweep", "scree")
GENERATORS = ("lowdim", "lowdim-population", "highdim")


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    generator: str | None = None
    gen_n: int = 100
    sim_spec: list | None = None  # [p, d, s, m] for the highdim generator
    header: bool = True
    delimiter: str = ","
    na_policy: str = "strict"
    center: bool = True
    correlation: bool = False
    log_returns: bool = False
    k: int = 2
    theta: float | str | None = None
    lambdas: list | None = None
    cardinality: list | None = None
    baseline_lambda2: float | None = None
    with_baseline: bool = False
    tail_convention: str = "squared"
    rescale: bool = True
    case: int | None = None
    reps: int = 50
    targets: list | None = None
    out: str = "out"
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InvalidConfig(f"unknown command {self.command!r}")
        if self.command == "simulate":
            if self.case not in (1, 2, 3, 4):
                raise InvalidConfig("simulate needs --case in 1..4")
            return
        if (self.input is None) == (self.generator is None):
            raise InvalidConfig("give exactly one data source: --input or --generator")
        if self.generator is not None and self.generator not in GENERATORS:
            raise InvalidConfig(f"unknown generator {self.generator!r}")
        if self.generator == "highdim" and (self.sim_spec is None or len(self.sim_spec) != 4):
            raise InvalidConfig("the highdim generator needs --sim-spec p,d,s,m")
        if self.command == "sweep" and not self.targets:
            raise InvalidConfig("sweep needs --targets")
        if self.command == "fit" and (self.lambdas is None) == (self.cardinality is None):
            raise InvalidConfig("fit needs exactly one of --lambda / --cardinality")

    def to_dict(self) -> dict:
        return asdict(self)

    def echo(self) -> dict:
        """Config as embedded in outputs; the output directory is implied by location."""
        d = self.to_dict()
        d.pop("out")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown manifest keys {sorted(unknown)}")
        return cls(**d)


def write_manifest(path, config: RunConfig, outputs=None, extra=None):
    doc = {
        "config": config.echo(),
        "seed": config.seed,
        "versions": {"spspca": __version__, "numpy": np.__version__},
        "outputs": sorted(outputs or []),
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> RunConfig:
    with open(path) as fh:
        doc = json.load(fh)
    return RunConfig.from_dict({**doc["config"], "out": os.path.dirname(os.path.abspath(path))})
