"""Treatment comparison: one-way ANOVA, Tukey HSD, mean CIs, two-proportion z and KS normality."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from leafsev.errors import DegenerateDataError
from leafsev.special import (
    f_sf,
    kolmogorov_sf,
    lilliefors_sf,
    norm_cdf,
    studentized_range_sf,
    t_ppf,
)

Z_PROP = "Z_PROP"
KS = "KS"
TUKEY_PAIR = "TUKEY_PAIR"


@dataclass
class AnovaTable:
    df_between: int
    df_within: int
    ss_between: float
    ss_within: float
    ms_between: float
    ms_within: float
    f: float
    p: float

    def to_dict(self):
        return asdict(self)


@dataclass
class TestResult:
    statistic: float
    p: float
    kind: str
    pair: tuple | None = None
    significant: bool | None = None
    note: str | None = None

    __test__ = False  # keep pytest from collecting this class

    def to_dict(self):
        d = asdict(self)
        if self.pair is not None:
            d["pair"] = list(self.pair)
        return {k: v for k, v in d.items() if v is not None}


@dataclass
class Interval:
    lower: float
    upper: float
    confidence: float
    mean: float | None = None

    def to_dict(self):
        return asdict(self)


def _check_groups(groups):
    arrs = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(arrs) < 2:
        raise ValueError("need at least two groups")
    for i, a in enumerate(arrs):
        if a.size < 2:
            raise ValueError(f"group {i} has {a.size} observation(s); need at least 2")
        if not np.isfinite(a).all():
            raise ValueError(f"group {i} contains non-finite values")
    return arrs


def one_way_anova(groups) -> AnovaTable:
    arrs = _check_groups(groups)
    n_total = sum(a.size for a in arrs)
    grand = np.concatenate(arrs).mean()
    means = [a.mean() for a in arrs]
    ss_between = float(sum(a.size * (m - grand) ** 2 for a, m in zip(arrs, means)))
    ss_within = float(sum(((a - m) ** 2).sum() for a, m in zip(arrs, means)))
    df_b = len(arrs) - 1
    df_w = n_total - len(arrs)
    if ss_within == 0.0:
        raise DegenerateDataError("zero within-group variance; F is undefined")
    ms_b = ss_between / df_b
    ms_w = ss_within / df_w
    f = ms_b / ms_w
    return AnovaTable(df_b, df_w, ss_between, ss_within, ms_b, ms_w, f, f_sf(f, df_b, df_w))


def tukey_hsd(groups, alpha=0.05, labels=None) -> list[TestResult]:
    """All-pairs Tukey (Tukey-Kramer for unequal sizes) comparisons."""
    arrs = _check_groups(groups)
    labels = list(labels) if labels is not None else [str(i) for i in range(len(arrs))]
    table = one_way_anova(arrs)
    k = len(arrs)
    results = []
    for i, j in itertools.combinations(range(k), 2):
        se = math.sqrt(table.ms_within / 2.0 * (1.0 / arrs[i].size + 1.0 / arrs[j].size))
        q = abs(arrs[i].mean() - arrs[j].mean()) / se
        p = studentized_range_sf(q, k, table.df_within)
        results.append(
            TestResult(statistic=float(q), p=p, kind=TUKEY_PAIR, pair=(labels[i], labels[j]),
                       significant=p < alpha)
        )
    return results


def mean_ci(sample, confidence=0.95) -> Interval:
    x = np.asarray(sample, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("mean_ci needs at least two observations")
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    m = float(x.mean())
    half = t_ppf((1.0 + confidence) / 2.0, x.size - 1) * float(x.std(ddof=1)) / math.sqrt(x.size)
    return Interval(lower=m - half, upper=m + half, confidence=confidence, mean=m)


def two_prop_z(x1, n1, x2, n2) -> TestResult:
    """Pooled two-sample proportion z test, two-sided."""
    for x, n in ((x1, n1), (x2, n2)):
        if n < 1 or not 0 <= x <= n:
            raise ValueError(f"need 0 <= x <= n and n >= 1, got x={x}, n={n}")
    pooled = (x1 + x2) / (n1 + n2)
    if pooled in (0.0, 1.0):
        raise DegenerateDataError("pooled proportion is 0 or 1; z is undefined")
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    z = (x1 / n1 - x2 / n2) / se
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return TestResult(statistic=z, p=min(1.0, p), kind=Z_PROP)


def ks_normality(sample, lilliefors=False) -> TestResult:
    """KS distance to a normal with the sample's own mean and standard deviation.

    The default p-value is the asymptotic Kolmogorov tail, which ignores that
    the parameters were estimated; ``lilliefors=True`` corrects for it.
    """
    x = np.sort(np.asarray(sample, dtype=np.float64).ravel())
    n = x.size
    if n < 4:
        raise ValueError("ks_normality needs at least four observations")
    sd = float(x.std(ddof=1))
    if sd == 0.0:
        raise DegenerateDataError("zero sample variance")
    cdf = np.array([norm_cdf(v) for v in (x - x.mean()) / sd])
    i = np.arange(1, n + 1)
    d = float(max((i / n - cdf).max(), (cdf - (i - 1) / n).max()))
    if lilliefors:
        p, note = lilliefors_sf(d, n), "parameters estimated; Lilliefors p-value"
    else:
        p, note = kolmogorov_sf(math.sqrt(n) * d), "parameters estimated; asymptotic Kolmogorov p-value"
    return TestResult(statistic=d, p=p, kind=KS, note=note)


# -- CSV front end ---------------------------------------------------------


def read_treatments_csv(text: str) -> dict[str, list[float]]:
    """One column per treatment, header row = names.  Blank trailing cells allowed."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("CSV is empty")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or any(not h for h in header):
        raise ValueError("CSV header must name at least two treatments")
    cols: dict[str, list[float]] = {h: [] for h in header}
    for rowno, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ValueError(f"row {rowno}: expected {len(header)} fields, got {len(row)}")
        for h, cell in zip(header, row):
            cell = cell.strip()
            if not cell:
                continue
            try:
                cols[h].append(float(cell))
            except ValueError:
                raise ValueError(f"row {rowno}: {h!r} value {cell!r} is not a number") from None
    for h, vals in cols.items():
        if len(vals) < 2:
            raise ValueError(f"treatment {h!r} has {len(vals)} value(s); need at least 2")
    return cols


def compare_treatments(treatments: dict, alpha=0.05, confidence=0.95) -> dict:
    names = list(treatments)
    groups = [treatments[n] for n in names]
    out = {
        "alpha": alpha,
        "anova": one_way_anova(groups).to_dict(),
        "tukey": [r.to_dict() for r in tukey_hsd(groups, alpha, labels=names)],
        "ci": {n: mean_ci(g, confidence).to_dict() for n, g in zip(names, groups)},
        "ks": {},
    }
    for n, g in zip(names, groups):
        try:
            out["ks"][n] = ks_normality(g).to_dict()
        except (ValueError, DegenerateDataError) as exc:
            out["ks"][n] = {"error": str(exc)}
    return out
