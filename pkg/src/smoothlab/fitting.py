"""Estimate reports and the shared constant-fitting protocol.

Every inequality checked by the package has the shape

    lhs >= C * lead - sum_i K_i * slack_i

with unknown positive constants.  A finite sample cannot prove existence of
the constants; what we can do is report the largest leading constant ``C`` on
a fixed log grid for which the slack constants needed stay within a budget tied
to the typical size of ``lhs``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

GRID_DECADES = (-6.0, 2.0)


@dataclass
class FitResult:
    C: float
    slacks: dict
    budgets: dict
    degenerate: bool
    worst_index: int
    grid: np.ndarray

    @property
    def passed(self):
        return self.C > 0 and not self.degenerate

    def as_dict(self, lead_name="C"):
        out = {lead_name: float(self.C), "degenerate": bool(self.degenerate)}
        for k, v in self.slacks.items():
            out[k] = float(v)
        for k, v in self.budgets.items():
            out[f"budget_{k}"] = float(v)
        return out


def _median_pos(w):
    w = np.asarray(w, dtype=float)
    w = w[w > 0]
    return float(np.median(w)) if w.size else 0.0


def fit_lower_bound(lhs, lead, slacks=None, n_grid=20, budget_factor=10.0):
    """Fit ``lhs >= C*lead - sum K_i * slack_i`` on a log grid of ``C``.

    Parameters
    ----------
    lhs, lead : array_like
        Sampled left-hand side and leading weight (``lead >= 0``).
    slacks : dict of str -> array_like, optional
        Slack weights.  Defaults to a single constant slack ``{"Cprime": 1}``.
        The last entry is solved for exactly; any earlier entries are scanned
        on the same grid as ``C``.
    n_grid : int
        Number of log-spaced candidate values of ``C``.
    budget_factor : float
        Slack ``K_i`` is admissible when
        ``K_i <= budget_factor * median|lhs| / median(slack_i)``.

    Returns
    -------
    FitResult
    """
    lhs = np.asarray(lhs, dtype=float).ravel()
    lead = np.asarray(lead, dtype=float).ravel()
    if slacks is None:
        slacks = {"Cprime": np.ones_like(lhs)}
    slacks = {k: np.broadcast_to(np.asarray(v, dtype=float).ravel(), lhs.shape) for k, v in slacks.items()}
    names = list(slacks)

    med_lhs = float(np.median(np.abs(lhs))) if lhs.size else 0.0
    med_lead = _median_pos(lead)
    budgets = {k: budget_factor * med_lhs / max(_median_pos(w), 1e-300) for k, w in slacks.items()}
    if med_lhs == 0.0 or med_lead == 0.0:
        return FitResult(0.0, {k: 0.0 for k in names}, budgets, True, 0, np.zeros(0))

    scale = med_lhs / med_lead
    grid = scale * np.logspace(*GRID_DECADES, n_grid)
    last = names[-1]
    scanned = names[:-1]
    # candidate values for scanned slacks: 0 plus the grid below budget
    cand = {k: np.concatenate([[0.0], budgets[k] * np.logspace(-6, 0, n_grid)]) for k in scanned}

    def solve(C):
        best = None
        combos = [dict()]
        for k in scanned:
            combos = [dict(c, **{k: v}) for c in combos for v in cand[k]]
        for combo in combos:
            margin = lhs - C * lead
            for k, v in combo.items():
                margin = margin + v * slacks[k]
            neg = margin < 0
            need = 0.0
            if np.any(neg):
                w = slacks[last][neg]
                if np.any(w <= 0):
                    continue
                need = float(np.max(-margin[neg] / w))
            if need <= budgets[last]:
                sol = dict(combo, **{last: need})
                if best is None or sum(sol.values()) < sum(best.values()):
                    best = sol
                    if not scanned:
                        break
        return best

    for C in grid[::-1]:
        sol = solve(C)
        if sol is not None:
            margin = lhs - C * lead + sum(sol[k] * slacks[k] for k in names)
            return FitResult(float(C), sol, budgets, False, int(np.argmin(margin)), grid)
    sol0 = solve(0.0) or {k: float("nan") for k in names}
    return FitResult(0.0, sol0, budgets, False, int(np.argmin(lhs)), grid)


def fit_upper_bound(values):
    """Finite empirical sup with the index attaining it."""
    v = np.asarray(values, dtype=float)
    i = int(np.argmax(v))
    return float(v[i]), i


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass
class EstimateReport:
    """Outcome of one inequality experiment.

    ``columns`` holds per-sample rows as equal-length arrays (sample
    descriptors, ``lhs``, ``rhs``, ``ratio``...).  ``passed`` must be derivable
    from the rows and the thresholds recorded in ``constants``/``environment``.
    """

    experiment: str
    columns: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    passed: bool = False
    environment: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def n_rows(self):
        if not self.columns:
            return 0
        return len(next(iter(self.columns.values())))

    def to_csv(self, path=None):
        """Write rows as CSV with round-trip float formatting; returns the text."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = list(self.columns)
        writer.writerow(names)
        cols = [np.asarray(self.columns[k]) for k in names]
        for i in range(self.n_rows):
            writer.writerow([_fmt(c[i].item() if hasattr(c[i], "item") else c[i]) for c in cols])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self):
        return {
            "experiment": self.experiment,
            "passed": bool(self.passed),
            "constants": _jsonable(self.constants),
            "environment": _jsonable(self.environment),
            "notes": list(self.notes),
            "n_rows": self.n_rows,
        }

    def to_json(self, path=None):
        text = json.dumps(self.summary(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    return obj
