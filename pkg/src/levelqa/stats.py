"""Statistical comparisons: descriptive summaries, paired Wilcoxon
signed-rank, independent Wilcoxon rank-sum, and the paired (extended
Brown-Forsythe) Levene dispersion test."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _sps


@dataclass(frozen=True)
class PairedSample:
    """Aligned paired observations, one (x, y) per case."""

    case_ids: tuple[str, ...]
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        ids = tuple(str(c) for c in self.case_ids)
        if not (len(ids) == len(x) == len(y)):
            raise ValueError(
                f"misaligned paired sample: {len(ids)} ids, {len(x)} x, {len(y)} y"
            )
        if len(x) < 1:
            raise ValueError("paired sample must hold at least one pair")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise ValueError("paired sample contains non-finite values")
        object.__setattr__(self, "case_ids", ids)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_arrays(cls, x, y, case_ids=None) -> "PairedSample":
        x = np.asarray(x, dtype=np.float64)
        if case_ids is None:
            case_ids = tuple(str(i) for i in range(len(x)))
        return cls(case_ids=tuple(case_ids), x=x, y=np.asarray(y, dtype=np.float64))


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str
    n_effective: int
    notes: str = ""


@dataclass(frozen=True)
class Descriptive:
    mean: float
    median: float
    q1: float
    q3: float


def descriptive(values) -> Descriptive:
    """Mean, median and quartiles (linear-interpolation / type-7 quantiles)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("descriptive statistics need at least one value")
    return Descriptive(
        mean=float(arr.mean()),
        median=float(np.quantile(arr, 0.5)),
        q1=float(np.quantile(arr, 0.25)),
        q3=float(np.quantile(arr, 0.75)),
    )


def summary_line(values) -> str:
    """The reporting format used throughout: mean (median, IQR lo - hi)."""
    d = descriptive(values)
    return f"{d.mean:.2f} (median {d.median:.2f}, IQR {d.q1:.2f} - {d.q3:.2f})"


def _two_sided_normal_p(z: float) -> float:
    return float(math.erfc(abs(z) / math.sqrt(2.0)))


def _signed_rank_exact_p(doubled_ranks: np.ndarray, w2: int) -> float:
    """Exact two-sided p for W+ by subset-sum counting over integer ranks.

    doubled_ranks are 2x the (mid)ranks of |d|, which are integers even
    under ties. counts[s] is the number of sign assignments with doubled
    statistic s; the distribution is identical to enumerating all 2^n
    assignments.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        r = int(r)
        shifted = counts.copy()
        shifted[r:] += counts[: total + 1 - r]
        counts = shifted
    denom = float(2 ** len(doubled_ranks))
    p_low = float(counts[: w2 + 1].sum()) / denom
    p_high = float(counts[w2:].sum()) / denom
    return min(1.0, 2.0 * min(p_low, p_high))


def wilcoxon_signed_rank(s: PairedSample, mode: str = "auto") -> TestResult:
    """Paired Wilcoxon signed-rank test, two-sided.

    Zero differences are dropped; ties in |d| take midranks. The exact
    null distribution (all sign assignments) is used when the effective n
    is <= 20 in auto mode or always in exact mode; otherwise a normal
    approximation with tie correction and continuity correction.
    """
    if mode not in ("exact", "approx", "auto"):
        raise ValueError(f"mode must be exact|approx|auto, got {mode!r}")
    d = s.x - s.y
    d = d[d != 0.0]
    n = int(d.size)
    if n == 0:
        return TestResult(
            statistic=0.0, p_value=1.0, method="wilcoxon-signed-rank",
            n_effective=0, notes="all differences zero",
        )
    dropped = len(s.x) - n
    ranks = _sps.rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    notes = f"{dropped} zero differences dropped" if dropped else ""

    use_exact = mode == "exact" or (mode == "auto" and n <= 20)
    if use_exact:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        w2 = int(round(2.0 * w_plus))
        p = _signed_rank_exact_p(doubled, w2)
        return TestResult(
            statistic=w_plus, p_value=p, method="wilcoxon-signed-rank-exact",
            n_effective=n, notes=notes,
        )

    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(((tie_counts**3 - tie_counts).sum())) / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    if var <= 0:
        return TestResult(
            statistic=w_plus, p_value=1.0, method="wilcoxon-signed-rank-normal",
            n_effective=n, notes=(notes + "; " if notes else "") + "zero variance",
        )
    diff = w_plus - mean
    cc = 0.5 * float(np.sign(diff))
    z = (diff - cc) / math.sqrt(var) if diff != 0 else 0.0
    return TestResult(
        statistic=w_plus, p_value=_two_sided_normal_p(z),
        method="wilcoxon-signed-rank-normal", n_effective=n, notes=notes,
    )


EXACT_RANK_SUM_LIMIT = 16


def wilcoxon_rank_sum(x, y) -> TestResult:
    """Independent two-sample Wilcoxon rank-sum test, two-sided.

    Exact by enumeration of rank assignments when m + n <= 16 and the
    pooled sample is tie-free; otherwise normal approximation with tie
    correction (no continuity correction).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m, n = int(x.size), int(y.size)
    if m == 0 or n == 0:
        raise ValueError("both samples must be non-empty")
    combined = np.concatenate([x, y])
    total = m + n
    tie_free = len(np.unique(combined)) == total
    ranks = _sps.rankdata(combined)
    w = float(ranks[:m].sum())

    if total <= EXACT_RANK_SUM_LIMIT and tie_free:
        w_int = int(round(w))
        n_le = n_ge = 0
        n_comb = 0
        for comb in itertools.combinations(range(1, total + 1), m):
            ws = sum(comb)
            n_comb += 1
            if ws <= w_int:
                n_le += 1
            if ws >= w_int:
                n_ge += 1
        p = min(1.0, 2.0 * min(n_le / n_comb, n_ge / n_comb))
        return TestResult(
            statistic=w, p_value=p, method="wilcoxon-rank-sum-exact",
            n_effective=total, notes="",
        )

    mean = m * (total + 1) / 2.0
    _, tie_counts = np.unique(combined, return_counts=True)
    tie_term = float((tie_counts**3 - tie_counts).sum())
    var = m * n / 12.0 * ((total + 1) - tie_term / (total * (total - 1)))
    if var <= 0:
        return TestResult(
            statistic=w, p_value=1.0, method="wilcoxon-rank-sum-normal",
            n_effective=total, notes="zero variance (all values identical)",
        )
    z = (w - mean) / math.sqrt(var)
    notes = "" if tie_free else "tie correction applied"
    return TestResult(
        statistic=w, p_value=_two_sided_normal_p(z),
        method="wilcoxon-rank-sum-normal", n_effective=total, notes=notes,
    )


def paired_levene(s: PairedSample) -> TestResult:
    """Paired dispersion test (extended Brown-Forsythe construction).

    Absolute deviations from each sample's median, a_i = |x_i - med(x)|
    and b_i = |y_i - med(y)|, are compared with a paired t-test on
    a_i - b_i with n - 1 degrees of freedom. Equal dispersion corresponds
    to mean difference 0.
    """
    n = len(s.x)
    if n < 3:
        raise ValueError(f"paired_levene needs n >= 3, got {n}")
    a = np.abs(s.x - np.median(s.x))
    b = np.abs(s.y - np.median(s.y))
    d = a - b
    mean_d = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean_d == 0.0:
            return TestResult(
                statistic=0.0, p_value=1.0, method="paired-levene",
                n_effective=n, notes="all deviation differences zero",
            )
        return TestResult(
            statistic=math.copysign(math.inf, mean_d), p_value=0.0,
            method="paired-levene", n_effective=n,
            notes="constant nonzero deviation difference",
        )
    t = mean_d / (sd / math.sqrt(n))
    p = 2.0 * float(_sps.t.sf(abs(t), df=n - 1))
    return TestResult(
        statistic=t, p_value=min(1.0, p), method="paired-levene",
        n_effective=n, notes="",
    )
