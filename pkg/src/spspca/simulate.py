"""Seeded data generators and the Case 1-4 experiment runner."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidSpec, SpspcaError
from .linalg import CovarianceInput, DataMatrix, center_columns

log = logging.getLogger(__name__)

# low-dimensional model: two independent hidden factors plus a mixture of them
VAR_V1 = 50.0
VAR_V2 = 300.0
V3_COEF = (-0.3, 0.925)
BLOCKS_LOWDIM = ((0, 4), (4, 8), (8, 10))


def gen_lowdim(n: int, seed: int) -> DataMatrix:
    if n < 2:
        raise InvalidSpec("n must be >= 2")
    rng = np.random.default_rng(seed)
    v1 = rng.normal(0.0, np.sqrt(VAR_V1), n)
    v2 = rng.normal(0.0, np.sqrt(VAR_V2), n)
    v3 = V3_COEF[0] * v1 + V3_COEF[1] * v2 + rng.normal(0.0, 1.0, n)
    hidden = (v1, v2, v3)
    X = np.empty((n, 10))
    for (lo, hi), v in zip(BLOCKS_LOWDIM, hidden):
        X[:, lo:hi] = v[:, None] + rng.normal(0.0, 1.0, (n, hi - lo))
    return center_columns(X, names=[f"X{i}" for i in range(1, 11)])


def lowdim_population_covariance() -> CovarianceInput:
    a, b = V3_COEF
    # covariance of the hidden (V1, V2, V3)
    H = np.array([
        [VAR_V1, 0.0, a * VAR_V1],
        [0.0, VAR_V2, b * VAR_V2],
        [a * VAR_V1, b * VAR_V2, a * a * VAR_V1 + b * b * VAR_V2 + 1.0],
    ])
    L = np.zeros((10, 3))
    for f, (lo, hi) in enumerate(BLOCKS_LOWDIM):
        L[lo:hi, f] = 1.0
    sigma = L @ H @ L.T + np.eye(10)
    return CovarianceInput(sigma, names=tuple(f"X{i}" for i in range(1, 11)))


@dataclass
class SimSpec:
    n: int
    p: int
    d: int
    s: tuple
    m: int
    seed: int = 0
    noise_sd: float = 1.0
    coef_low: float = 1.5
    coef_high: float = 2.5

    def __post_init__(self):
        if np.isscalar(self.s):
            self.s = (int(self.s),) * self.d
        self.s = tuple(int(v) for v in self.s)
        if self.d < 1:
            raise InvalidSpec("d must be >= 1")
        if len(self.s) != self.d:
            raise InvalidSpec(f"need {self.d} block sizes, got {len(self.s)}")
        if min(self.s + (self.m, self.n)) < 0:
            raise InvalidSpec("counts must be >= 0")
        if sum(self.s) + self.m != self.p:
            raise InvalidSpec(f"sum(s) + m = {sum(self.s) + self.m} != p = {self.p}")
        if self.n < 2:
            raise InvalidSpec("n must be >= 2")
        if self.m and self.d < 2:
            raise InvalidSpec("mixed variables need at least 2 factors")


@dataclass
class HighDimSample:
    X: DataMatrix
    ideal_support: np.ndarray
    P: np.ndarray
    mixed_factors: list


def gen_highdim(spec: SimSpec) -> HighDimSample:
    """Latent-factor data: structural blocks load on one factor, mixed columns on 2-3."""
    rng = np.random.default_rng(spec.seed)
    n, d = spec.n, spec.d
    F = rng.standard_normal((n, d))
    p_struct = sum(spec.s)
    P = np.zeros((p_struct, d))
    support = np.zeros((spec.p, d), dtype=bool)
    start = 0
    for j, size in enumerate(spec.s):
        P[start : start + size, j] = rng.uniform(spec.coef_low, spec.coef_high, size)
        support[start : start + size, j] = True
        start += size
    X_struct = F @ P.T + spec.noise_sd * rng.standard_normal((n, p_struct))

    C = np.zeros((spec.m, d))
    mixed = []
    for i in range(spec.m):
        count = int(rng.integers(2, min(3, d) + 1))
        chosen = np.sort(rng.choice(d, size=count, replace=False))
        w = rng.standard_normal(count)
        C[i, chosen] = w / np.linalg.norm(w)
        mixed.append(tuple(int(c) for c in chosen))
    X_mix = F @ C.T + spec.noise_sd * rng.standard_normal((n, spec.m))

    X = center_columns(np.hstack([X_struct, X_mix]), names=[f"X{i}" for i in range(1, spec.p + 1)])
    return HighDimSample(X=X, ideal_support=support, P=np.vstack([P, C]), mixed_factors=mixed)


# ---------------------------------------------------------------------------
# experiment cases

CASE_BASE = {"n": 100, "p": 300, "d": 5, "m": 50}
CASE_GRIDS = {
    1: [dict(CASE_BASE, s=50)],
    2: [dict(n=100, d=5, p=p, m=p // 6, s=p // 6) for p in (150, 300, 450, 600, 750, 900)],
    3: [dict(CASE_BASE, m=m, s=s) for m, s in ((10, 58), (50, 50), (100, 40), (150, 30))],
    4: [dict(CASE_BASE, d=d, s=s) for d, s in ((2, 125), (5, 50), (10, 25))],
}
CASE_PARAM = {1: "p", 2: "p", 3: "m", 4: "d"}


def case_specs(case_id: int, overrides=None, values=None):
    """Parameter points of a case; each is (point_dict, adjustment_note_or_None).

    ``values`` restricts the grid to those values of the case's swept parameter.
    """
    if case_id not in CASE_GRIDS:
        raise InvalidSpec(f"unknown case {case_id}")
    grid = CASE_GRIDS[case_id]
    if values is not None:
        param = CASE_PARAM[case_id]
        allowed = {pt[param] for pt in grid}
        missing = sorted(set(values) - allowed)
        if missing:
            raise InvalidSpec(f"case {case_id} has no {param} in {missing}; choose from {sorted(allowed)}")
        grid = [pt for pt in grid if pt[param] in set(values)]
    out = []
    for point in grid:
        point = dict(point)
        if overrides:
            point.update(overrides)
        out.append(balance_blocks(point))
    return out


def balance_blocks(point):
    """Replicate scalar s over d blocks; any shortfall or excess goes to the last block."""
    point = dict(point)
    s = point["s"]
    d = point["d"]
    blocks = [int(s)] * d if np.isscalar(s) else [int(v) for v in s]
    note = None
    gap = point["p"] - point["m"] - sum(blocks)
    if gap:
        blocks[-1] += gap
        if blocks[-1] < 0:
            raise InvalidSpec(f"cannot balance blocks for {point}")
        note = f"last block adjusted by {gap:+d} so that sum(s) + m = p"
    point["s"] = tuple(blocks)
    return point, note


@dataclass
class CaseResult:
    method: str
    point: dict
    cumulative: list
    support_scores: list
    errors: list = field(default_factory=list)
    note: str | None = None

    @property
    def replications(self) -> int:
        return len(self.cumulative)

    @property
    def mean_cumulative(self) -> float:
        vals = [v for v in self.cumulative if v is not None]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def mean_support(self) -> float:
        vals = [v for v in self.support_scores if v is not None]
        return float(np.mean(vals)) if vals else float("nan")

    def to_dict(self):
        out = asdict(self)
        out["replications"] = self.replications
        out["mean_cumulative"] = self.mean_cumulative
        out["mean_support"] = self.mean_support
        return out


def support_recovery(B, ideal) -> float:
    """Greedy component-to-factor matching by overlap; fraction of ideal entries recovered."""
    est = np.asarray(B) != 0
    ideal = np.asarray(ideal, dtype=bool)
    k, d = est.shape[1], ideal.shape[1]
    overlap = est.T.astype(int) @ ideal.astype(int)
    hit = 0
    used_c, used_f = set(), set()
    for _ in range(min(k, d)):
        best, bc, bf = -1, None, None
        for c in range(k):
            if c in used_c:
                continue
            for f in range(d):
                if f not in used_f and overlap[c, f] > best:
                    best, bc, bf = overlap[c, f], c, f
        used_c.add(bc)
        used_f.add(bf)
        hit += best
    total = ideal.sum()
    return float(hit / total) if total else float("nan")


def replication_seed(master: int, rep: int) -> int:
    return int(master) ^ int(rep)


def worker_count() -> int:
    env = os.environ.get("SPSPCA_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _one_replication(point, seed, methods, cardinality, config_extra):
    from .spca import SpcaConfig, fit_sp_spca, fit_spca_baseline

    spec = SimSpec(n=point["n"], p=point["p"], d=point["d"], s=point["s"], m=point["m"], seed=seed)
    sample = gen_highdim(spec)
    out = {}
    for method in methods:
        try:
            cfg = SpcaConfig(k=spec.d, cardinality=[cardinality] * spec.d, **config_extra)
            fitter = fit_spca_baseline if method == "spca" else fit_sp_spca
            fit = fitter(sample.X, cfg)
            out[method] = (fit.variance.cumulative, support_recovery(fit.B, sample.ideal_support), None)
        except SpspcaError as exc:
            log.warning("replication seed=%d method=%s failed: %s", seed, method, exc)
            out[method] = (None, None, f"{type(exc).__name__}: {exc}")
    return out


def run_case(case_id, overrides=None, reps=50, methods=("sp-spca", "spca"), seed=0,
             cardinality=None, threads=None, config_extra=None, values=None):
    """Run every parameter point of a case for all methods, averaging over replications.

    Per-component cardinality is 50 for case 1 and the (first) block size
    otherwise.  Replication ``r`` uses seed ``seed ^ r``; results are merged
    by replication index so scheduling does not affect the output.
    """
    if reps < 1:
        raise InvalidSpec("reps must be >= 1")
    # the adaptive penalty is defined relative to eigenvalue 1, so the Gram is
    # put on the unit-mean-eigenvalue scale; the baseline is scale-free
    config_extra = {"rescale": True, **(config_extra or {})}
    threads = threads or worker_count()
    results = []
    for point, note in case_specs(case_id, overrides, values):
        card = cardinality or (50 if case_id == 1 else int(point["s"][0]))
        seeds = [replication_seed(seed, r) for r in range(reps)]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outs = list(pool.map(lambda s: _one_replication(point, s, methods, card, config_extra), seeds))
        else:
            outs = [_one_replication(point, s, methods, card, config_extra) for s in seeds]
        for method in methods:
            rows = [o[method] for o in outs]
            results.append(CaseResult(
                method=method,
                point={**point, "s": list(point["s"]), "cardinality": card},
                cumulative=[r[0] for r in rows],
                support_scores=[r[1] for r in rows],
                errors=[r[2] for r in rows if r[2]],
                note=note,
            ))
    return results
