"""Sample-size bound comparison between a single PLR model and feature-partitioned stacking.

Both bounds are a constant C1 times the largest of three terms. C1 is not
known, so it is set to 1 and only ratios between configurations mean
anything. Every rendering of the report carries :data:`BANNER`.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from typing import Sequence, Union

import numpy as np

from .mechanism import bound_terms
from .partition import alpha_importance, feature_partition

BANNER = "C1 = 1: relative comparison only"
READINGS = ("adjusted", "raw")

QScheme = Union[str, Sequence[float]]


@dataclasses.dataclass(frozen=True)
class BoundRow:
    d: int
    K: int
    scheme: str
    reading: str
    q: tuple
    single: tuple
    part: tuple  # one (t1, t2, t3) per group

    @property
    def part_max_terms(self):
        """Termwise maximum over groups."""
        return tuple(max(g[i] for g in self.part) for i in range(3))

    @property
    def middle_ratio(self):
        return self.part_max_terms[1] / self.single[1]

    @property
    def max_ratio(self):
        return max(self.part_max_terms) / max(self.single)

    @property
    def part_smaller(self):
        return max(self.part_max_terms) < max(self.single)


@dataclasses.dataclass(frozen=True)
class BoundReport:
    rows: tuple
    eps_g: float
    epsilon: float
    delta: float
    v_norm: float

    _COLUMNS = ("d", "K", "scheme", "reading", "single_t1", "single_t2", "single_t3",
                "part_t1", "part_t2", "part_t3", "middle_ratio", "max_ratio", "part_smaller")

    def records(self):
        out = []
        for r in self.rows:
            e5 = r.part_max_terms
            out.append(dict(zip(self._COLUMNS, (
                r.d, r.K, r.scheme, r.reading, *r.single, *e5, r.middle_ratio, r.max_ratio,
                int(r.part_smaller)))))
        return out

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# {BANNER}\n")
        buf.write(f"# eps_g={self.eps_g!r} epsilon={self.epsilon!r} delta={self.delta!r} "
                  f"v_norm={self.v_norm!r}\n")
        w = csv.DictWriter(buf, fieldnames=self._COLUMNS, lineterminator="\n")
        w.writeheader()
        for rec in self.records():
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})
        return buf.getvalue()

    def to_text(self):
        head = ("d", "K", "scheme", "reading", "single max", "part max", "mid ratio", "max ratio", "part<single")
        lines = [BANNER, f"eps_g={self.eps_g:g}  epsilon={self.epsilon:g}  delta={self.delta:g}  "
                         f"||v||={self.v_norm:g}  (part terms: max over groups)", ""]
        table = [head]
        for r in self.rows:
            table.append((str(r.d), str(r.K), r.scheme, r.reading, f"{max(r.single):.4g}",
                          f"{max(r.part_max_terms):.4g}", f"{r.middle_ratio:.4g}", f"{r.max_ratio:.4g}",
                          "yes" if r.part_smaller else "no"))
        widths = [max(len(row[i]) for row in table) for i in range(len(head))]
        for row in table:
            lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)))
        return "\n".join(lines) + "\n"


def scheme_weights(scheme: QScheme, d, K):
    """(label, group weights) for a q scheme.

    ``"uniform"`` gives 1/K each; ``"alpha=<a>"`` the weights of a sorted
    partition under alpha-power importance; a sequence is used as given.
    """
    if isinstance(scheme, str):
        if scheme == "uniform":
            return scheme, np.full(K, 1.0 / K)
        if scheme.startswith("alpha="):
            a = float(scheme.split("=", 1)[1])
            return scheme, feature_partition(d, K, "sorted", alpha_importance(d, a)).weights
        raise ValueError(f"unknown q scheme {scheme!r}")
    q = np.asarray(scheme, dtype=float)
    if q.shape != (K,):
        raise ValueError(f"q scheme has {q.size} weights, expected K={K}")
    if np.any(q <= 0) or not math.isclose(q.sum(), 1.0, rel_tol=1e-9):
        raise ValueError("explicit q must be positive and sum to one")
    return ",".join(f"{x:g}" for x in q), q


def bound_report(ds: Sequence[int], Ks: Sequence[int], q_schemes: Sequence[QScheme], eps_g, epsilon,
                 delta, *, v_norm=1.0, readings: Sequence[str] = READINGS):
    """Tabulate both bounds for every (d, K, q scheme, reading) with K <= d."""
    if not ds or not Ks or not q_schemes:
        raise ValueError("grids must be non-empty")
    rows = []
    for d in ds:
        single = bound_terms("single", v_norm, d, eps_g, epsilon, delta)
        for K in Ks:
            if K > d:
                continue
            for scheme in q_schemes:
                label, q = scheme_weights(scheme, d, K)
                for reading in readings:
                    part = tuple(bound_terms("part", v_norm, d, eps_g, epsilon, delta, K, float(qk), reading)
                                for qk in q)
                    rows.append(BoundRow(d, K, label, reading, tuple(float(x) for x in q), single, part))
    return BoundReport(tuple(rows), float(eps_g), float(epsilon), float(delta), float(v_norm))
