"""Leakage metrics over trace-feature ensembles.

All estimators are plug-in statistics over discrete or binned samples and
are deterministic for fixed inputs.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, UndefinedCorrelation

MI_BINS = 32
CVM_CRITICAL_5PCT = 0.46136  # asymptotic two-sample critical value at alpha = 0.05
_POPCOUNT8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


@dataclass(frozen=True)
class EmpiricalDist:
    """Probabilities over an ordered support."""

    support: tuple
    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if len(self.support) != p.size:
            raise ValueError("support and probabilities differ in length")
        if (p < 0).any() or abs(p.sum() - 1) > 1e-9:
            raise DomainError("probabilities must be non-negative and sum to 1")

    @classmethod
    def from_samples(cls, samples, support: Sequence | None = None, bins: int | None = None,
                     smooth: bool = True) -> "EmpiricalDist":
        """Empirical law of `samples` over `support` (default: sorted observed values).

        With `bins`, samples are histogrammed into that many equal-width bins.
        Empty cells get mass ``1/(10 N)`` before renormalizing.
        """
        x = np.asarray(samples)
        if x.size == 0:
            raise DomainError("no samples")
        if bins is not None:
            counts, edges = np.histogram(x, bins=bins)
            sup = tuple(float(e) for e in 0.5 * (edges[:-1] + edges[1:]))
        else:
            sup = tuple(np.unique(x).tolist()) if support is None else tuple(support)
            idx = {v: i for i, v in enumerate(sup)}
            vals, c = np.unique(x, return_counts=True)
            counts = np.zeros(len(sup))
            for v, n in zip(vals.tolist(), c):
                if v not in idx:
                    raise DomainError(f"sample {v} outside the support")
                counts[idx[v]] = n
        return cls.from_counts(sup, counts, smooth)

    @classmethod
    def from_counts(cls, support, counts, smooth: bool = True) -> "EmpiricalDist":
        counts = np.asarray(counts, dtype=float)
        n = counts.sum()
        if n <= 0:
            raise DomainError("no samples")
        p = counts / n
        if smooth and (p == 0).any():
            p = np.where(p == 0, 1 / (10 * n), p)
            p = p / p.sum()
        return cls(tuple(support), tuple(p.tolist()))

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)


def fisher_discrete(d: EmpiricalDist | Sequence[float]) -> float:
    """Sum over adjacent support points of ``(p[i+1] - p[i])**2 / p[i]``.

    Fewer than two points give 0.
    """
    p = d.p if isinstance(d, EmpiricalDist) else np.asarray(d, dtype=float)
    if p.size < 2:
        return 0.0
    if (p[:-1] <= 0).any():
        raise DomainError("probabilities must be positive; smooth first")
    return float(np.sum(np.diff(p) ** 2 / p[:-1]))


def cramer_rao(fi: float) -> float:
    """Variance lower bound ``1/FI``; infinite when FI is zero."""
    if fi < 0:
        raise DomainError("Fisher information is non-negative")
    return math.inf if fi == 0 else 1.0 / fi


def _discretize(x: np.ndarray, bins: int) -> np.ndarray:
    uniq, codes = np.unique(x, return_inverse=True)
    if uniq.size <= bins:
        return codes.ravel()
    edges = np.linspace(x.min(), x.max(), bins + 1)
    return np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)


def mutual_information_table(joint) -> float:
    """MI in bits of a joint table (2D array or ``{(x, y): p}``)."""
    if isinstance(joint, dict):
        xs = sorted({k[0] for k in joint})
        ys = sorted({k[1] for k in joint})
        t = np.zeros((len(xs), len(ys)))
        for (a, b), v in joint.items():
            t[xs.index(a), ys.index(b)] = v
    else:
        t = np.asarray(joint, dtype=float)
    total = math.fsum(t.ravel().tolist())
    if total <= 0:
        raise DomainError("empty joint table")
    t = t / total
    # correctly rounded sums do not depend on summation order, so MI(x,y) == MI(y,x) exactly
    px = np.array([[math.fsum(r)] for r in t.tolist()])
    py = np.array([[math.fsum(c) for c in t.T.tolist()]])
    nz = t > 0
    terms = t[nz] * np.log2(t[nz] / (px @ py)[nz])
    return max(math.fsum(terms.tolist()), 0.0)


def mutual_information(x, y, bins: int = MI_BINS) -> float:
    """Plug-in MI in bits; variables with more than `bins` values are binned equal-width."""
    x, y = np.asarray(x), np.asarray(y)
    if x.size == 0 or x.size != y.size:
        raise DomainError("need equal, non-zero sample counts")
    cx, cy = _discretize(x.ravel(), bins), _discretize(y.ravel(), bins)
    t = np.zeros((cx.max() + 1, cy.max() + 1))
    np.add.at(t, (cx, cy), 1)
    return mutual_information_table(t)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise DomainError("need two equal-length samples")
    dx, dy = x - x.mean(), y - y.mean()
    ax, ay = np.abs(dx).max(), np.abs(dy).max()
    if ax == 0 or ay == 0:
        raise UndefinedCorrelation("constant input")
    # rescaling keeps tiny deviations from underflowing in the squares
    dx, dy = dx / ax, dy / ay
    sx, sy = math.sqrt(dx @ dx), math.sqrt(dy @ dy)
    return float(np.clip(dx @ dy / (sx * sy), -1.0, 1.0))


@dataclass(frozen=True)
class RunsResult:
    p_value: float
    runs: int
    applicable: bool


def binarize(x) -> np.ndarray:
    """1 above the median, 0 otherwise; binary input passes through."""
    x = np.asarray(x)
    if x.dtype == bool or np.isin(x, (0, 1)).all():
        return x.astype(np.uint8)
    return (x > np.median(x)).astype(np.uint8)


def runs_test(bits) -> RunsResult:
    """Runs test for randomness of a bit sequence.

    When the ones-proportion precheck fails the test does not apply and the
    p-value is reported as 0.
    """
    e = binarize(bits).ravel()
    n = e.size
    if n < 2:
        raise DomainError("need at least two bits")
    pi = e.mean()
    runs = int(1 + np.count_nonzero(e[1:] != e[:-1]))
    # for n <= 3 the bound admits constant sequences, which have no runs statistic
    if abs(pi - 0.5) >= 2 / math.sqrt(n) or pi in (0.0, 1.0):
        return RunsResult(0.0, runs, False)
    num = abs(runs - 2 * n * pi * (1 - pi))
    p = math.erfc(num / (2 * math.sqrt(2 * n) * pi * (1 - pi)))
    return RunsResult(float(min(max(p, 0.0), 1.0)), runs, True)


def cvm_distance(sample, reference) -> float:
    """Two-sample Cramér-von Mises statistic T (ties handled by midranks)."""
    x = np.asarray(sample, dtype=float).ravel()
    y = np.asarray(reference, dtype=float).ravel()
    n, m = x.size, y.size
    if n == 0 or m == 0:
        raise DomainError("both samples must be non-empty")
    z = np.concatenate([x, y])
    order = np.argsort(z, kind="stable")
    ranks = np.empty(n + m)
    ranks[order] = np.arange(1, n + m + 1)
    # midranks for ties
    zs = z[order]
    _, start, counts = np.unique(zs, return_index=True, return_counts=True)
    for s, c in zip(start, counts):
        if c > 1:
            ranks[order[s : s + c]] = s + (c + 1) / 2
    r = np.sort(ranks[:n])
    s = np.sort(ranks[n:])
    i = np.arange(1, n + 1)
    j = np.arange(1, m + 1)
    u = n * np.sum((r - i) ** 2) + m * np.sum((s - j) ** 2)
    t = u / (n * m * (n + m)) - (4 * m * n - 1) / (6 * (m + n))
    return float(max(t, 0.0))


# -- features -------------------------------------------------------------


def popcount_words(data: bytes, word: int = 4) -> np.ndarray:
    """Set bits in each `word`-byte word of `data` (trailing partial word dropped)."""
    b = np.frombuffer(bytes(data), dtype=np.uint8)
    b = b[: b.size - b.size % word]
    return _POPCOUNT8[b].reshape(-1, word).sum(axis=1)


def popcount(data: bytes) -> int:
    return int(_POPCOUNT8[np.frombuffer(bytes(data), dtype=np.uint8)].sum(dtype=np.int64))


def bits_of(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))


WORD_SUPPORT = tuple(range(33))


def word_popcount_dist(payloads: Sequence[bytes]) -> EmpiricalDist:
    """Pooled law of 32-bit word popcounts over `payloads`, on the support 0..32."""
    counts = np.zeros(33)
    for d in payloads:
        counts += np.bincount(popcount_words(d), minlength=33)
    return EmpiricalDist.from_counts(WORD_SUPPORT, counts)


@dataclass
class LeakageReport:
    fi: float
    cr_bound: float
    mi: float
    pearson: float | None
    runs_p: float
    cvm: float
    label: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["cr_bound"]):
            d["cr_bound"] = "inf"
        return d


def leakage_report(payloads: Sequence[bytes], secret: Sequence, reference: Sequence[bytes],
                   label: str = "") -> LeakageReport:
    """All six metrics for one ensemble of bus payloads.

    FI is taken over pooled word popcounts. MI and Pearson relate the
    per-probe popcount to the secret. The runs-test p-value is averaged over
    per-probe bit streams. CVM compares per-probe popcounts with those of the
    `reference` ensemble.
    """
    fi = fisher_discrete(word_popcount_dist(payloads))
    scalar = np.array([popcount(d) for d in payloads])
    ref_scalar = np.array([popcount(d) for d in reference])
    try:
        r = pearson(scalar, secret)
    except UndefinedCorrelation:
        r = None
    runs = [runs_test(bits_of(d)).p_value for d in payloads if len(d) >= 13]
    return LeakageReport(
        fi=fi,
        cr_bound=cramer_rao(fi),
        mi=mutual_information(secret, scalar),
        pearson=r,
        runs_p=float(np.mean(runs)) if runs else 0.0,
        cvm=cvm_distance(scalar, ref_scalar),
        label=label,
    )


def reports_json(reports: Sequence[LeakageReport], config: dict | None = None) -> str:
    return json.dumps({"config": config or {}, "reports": [r.to_dict() for r in reports]},
                      indent=2, sort_keys=True)


def reports_csv(reports: Sequence[LeakageReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["label", "fi", "cr_bound", "mi", "pearson", "runs_p", "cvm"]
    w.writerow(cols)
    for r in reports:
        d = r.to_dict()
        w.writerow([d[c] for c in cols])
    return buf.getvalue()
