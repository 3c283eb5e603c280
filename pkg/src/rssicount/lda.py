"""Fisher linear discriminant analysis for group-size classification.

Training builds the within-group (S_w) and between-group (S_b) scatter
matrices and solves S_b v = lambda S_w v. The leading ``g - 1`` directions
are scaled to unit pooled within-group variance and shifted so the grand
mean scores zero, which gives the usual unstandardized canonical
discriminant functions ``D = v . x + c``. Classification assigns the group
whose centroid is nearest in discriminant space.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.special import betainc

from .errors import DegenerateDataError, DimensionError, ModelFormatError, TrainingError
from .features import FEATURE_NAMES, EventFeatureVector, as_matrix

MAGIC = "RSSICOUNT-LDA"
FORMAT_VERSION = 1
COND_LIMIT = 1e12
RIDGE_SCALE = 1e-6
SIGNIFICANCE = 0.3


@dataclass(frozen=True, eq=False)
class LdaModel:
    coefficients: np.ndarray  # k x p
    constants: np.ndarray  # k
    centroids: np.ndarray  # g x k
    eigenvalues: np.ndarray  # k, descending
    variance_pct: np.ndarray
    canonical_correlations: np.ndarray
    structure_matrix: np.ndarray  # p x k
    group_labels: tuple
    regularization_used: float = 0.0
    training_accuracy: float = float("nan")

    @property
    def p(self) -> int:
        return int(self.coefficients.shape[1])

    @property
    def g(self) -> int:
        return len(self.group_labels)

    @property
    def n_functions(self) -> int:
        return int(self.coefficients.shape[0])

    def __eq__(self, other):
        if not isinstance(other, LdaModel):
            return NotImplemented
        arrays = ("coefficients", "constants", "centroids", "eigenvalues", "variance_pct",
                  "canonical_correlations", "structure_matrix")
        same_acc = (self.training_accuracy == other.training_accuracy) or (
            math.isnan(self.training_accuracy) and math.isnan(other.training_accuracy)
        )
        return (
            all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
            and tuple(self.group_labels) == tuple(other.group_labels)
            and self.regularization_used == other.regularization_used
            and same_acc
        )


@dataclass
class GroupStatsRow:
    variable: str
    wilks_lambda: float
    f_stat: float
    p_value: float


@dataclass
class ScatterMatrices:
    within: np.ndarray
    between: np.ndarray
    group_means: np.ndarray
    grand_mean: np.ndarray
    counts: np.ndarray
    labels: tuple = field(default_factory=tuple)


def _coerce(dataset, labels=None) -> tuple[np.ndarray, np.ndarray]:
    if labels is not None:
        X = np.asarray(dataset, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        return X, np.asarray(labels)
    X, y = as_matrix(list(dataset))
    if (y < 0).any():
        raise TrainingError("unlabeled feature vector in training data")
    return X, y


def scatter_matrices(X: np.ndarray, y: np.ndarray) -> ScatterMatrices:
    labels = tuple(sorted(set(y.tolist())))
    grand = X.mean(axis=0)
    p = X.shape[1]
    sw = np.zeros((p, p))
    sb = np.zeros((p, p))
    means, counts = [], []
    for lab in labels:
        Xg = X[y == lab]
        mg = Xg.mean(axis=0)
        centered = Xg - mg
        sw += centered.T @ centered
        d = (mg - grand)[:, None]
        sb += Xg.shape[0] * (d @ d.T)
        means.append(mg)
        counts.append(Xg.shape[0])
    return ScatterMatrices(sw, sb, np.array(means), grand, np.array(counts), labels)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12 * max(np.abs(v).max(), 1e-300))
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def fit(dataset, labels=None) -> LdaModel:
    """Fit discriminant functions.

    ``dataset`` is a sequence of labeled :class:`EventFeatureVector`, or a
    2-D array of features when ``labels`` is given.
    """
    X, y = _coerce(dataset, labels)
    N, p = X.shape
    groups = sorted(set(y.tolist()))
    if len(groups) < 2:
        raise TrainingError("need at least 2 groups")
    for lab in groups:
        if np.sum(y == lab) < 2:
            raise TrainingError(f"group {lab} has fewer than 2 samples")
    if N <= p:
        warnings.warn(f"{N} samples for {p} variables; scatter matrix may be singular", RuntimeWarning)

    sc = scatter_matrices(X, y)
    g = len(groups)
    tr_w = float(np.trace(sc.within))
    if tr_w == 0.0:
        raise DegenerateDataError("no within-group variation")

    sw = sc.within
    ridge = 0.0
    if np.linalg.cond(sw) > COND_LIMIT:
        ridge = RIDGE_SCALE * tr_w / p
        sw = sw + ridge * np.eye(p)

    evals, evecs = scipy.linalg.eigh(sc.between, sw)
    order = np.argsort(evals)[::-1]
    k = min(g - 1, p)
    evals = np.clip(evals[order][:k], 0.0, None)
    # eigh normalizes v' S_w v = 1; rescale to unit pooled within-group variance
    vecs = evecs[:, order][:, :k] * math.sqrt(N - g)
    coef = np.array([_fix_sign(vecs[:, j]) for j in range(k)])
    const = -coef @ sc.grand_mean
    centroids = sc.group_means @ coef.T + const

    total = evals.sum()
    pct = evals / total * 100.0 if total > 0 else np.full(k, 100.0 / k)
    canon = np.sqrt(evals / (1.0 + evals))

    model = LdaModel(coef, const, centroids, evals, pct, canon, np.zeros((p, k)), tuple(groups), ridge)
    smat, _, _ = structure_matrix(model, X, y)
    pred = classify_many(model, X)
    acc = float(np.mean(pred == y))
    return LdaModel(coef, const, centroids, evals, pct, canon, smat, tuple(groups), ridge, acc)


def _features(model: LdaModel, x) -> np.ndarray:
    if isinstance(x, EventFeatureVector):
        x = x.as_array()
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.p:
        raise DimensionError(f"model expects {model.p} features, got {x.shape[-1]}")
    return x


def score(model: LdaModel, x) -> np.ndarray:
    """Discriminant scores ``D_k = sum_j v_kj x_j + c_k``; batches along the first axis."""
    x = _features(model, x)
    return x @ model.coefficients.T + model.constants


def _nearest(centroids: np.ndarray, labels: Sequence[int], d: np.ndarray) -> int:
    dist = np.sqrt(((centroids - d) ** 2).sum(axis=1))
    best = dist.min()
    ties = np.flatnonzero(np.isclose(dist, best, rtol=1e-12, atol=1e-12))
    return min(labels[i] for i in ties)


def classify(model: LdaModel, x) -> int:
    """Label of the nearest group centroid; ties go to the smaller label."""
    d = score(model, x)
    if d.ndim != 1:
        raise DimensionError("classify takes one feature vector; use classify_many")
    return _nearest(model.centroids, model.group_labels, d)


def classify_many(model: LdaModel, X) -> np.ndarray:
    if not isinstance(X, np.ndarray):
        X = np.array([v.as_array() if isinstance(v, EventFeatureVector) else v for v in X], dtype=np.float64)
    D = score(model, X).reshape(len(X), model.n_functions)
    return np.array([_nearest(model.centroids, model.group_labels, d) for d in D], dtype=np.int64)


def canonical_correlation(eigenvalue: float) -> float:
    if eigenvalue < 0:
        raise ValueError("eigenvalue must be non-negative")
    return math.sqrt(eigenvalue / (1.0 + eigenvalue))


def variance_percentages(eigenvalues) -> np.ndarray:
    ev = np.asarray(eigenvalues, dtype=np.float64)
    return ev / ev.sum() * 100.0


def f_from_lambda(wilks_lambda: float, n: int, g: int) -> float:
    """Univariate one-way F from Wilks' lambda, df = (g - 1, n - g)."""
    if not 0 < wilks_lambda <= 1:
        raise ValueError("Wilks' lambda must lie in (0, 1]")
    return (1.0 - wilks_lambda) / wilks_lambda * (n - g) / (g - 1)


def f_sf(f: float, dfn: float, dfd: float) -> float:
    """Upper-tail F probability via the regularized incomplete beta function."""
    if f <= 0:
        return 1.0
    return float(betainc(dfd / 2.0, dfn / 2.0, dfd / (dfd + dfn * f)))


def wilks_univariate(dataset, variable: int, labels=None) -> tuple[float, float, float]:
    X, y = _coerce(dataset, labels)
    col = X[:, variable]
    groups = sorted(set(y.tolist()))
    n, g = col.shape[0], len(groups)
    ss_total = float(((col - col.mean()) ** 2).sum())
    if ss_total == 0.0:
        raise DegenerateDataError(f"variable {variable} has zero total sum of squares")
    ss_within = float(sum(((col[y == lab] - col[y == lab].mean()) ** 2).sum() for lab in groups))
    lam = ss_within / ss_total
    f = (1.0 - lam) / lam * (n - g) / (g - 1) if lam > 0 else math.inf
    return lam, f, f_sf(f, g - 1, n - g) if math.isfinite(f) else 0.0


def group_stats_table(dataset, labels=None, names: Sequence[str] = FEATURE_NAMES) -> list[GroupStatsRow]:
    X, y = _coerce(dataset, labels)
    rows = []
    for j in range(X.shape[1]):
        name = names[j] if j < len(names) else f"x{j}"
        rows.append(GroupStatsRow(name, *wilks_univariate(X, j, y)))
    return rows


def structure_matrix(model: LdaModel, dataset, labels=None):
    """Pooled within-group correlations between each variable and each score.

    Returns ``(R, significant, degenerate)`` where ``significant`` flags
    ``|R| >= 0.3`` and ``degenerate`` marks zero-variance variables (their
    correlations are reported as 0).
    """
    X, y = _coerce(dataset, labels)
    D = score(model, X).reshape(X.shape[0], model.n_functions)
    Xc = np.empty_like(X)
    Dc = np.empty_like(D)
    for lab in set(y.tolist()):
        m = y == lab
        Xc[m] = X[m] - X[m].mean(axis=0)
        Dc[m] = D[m] - D[m].mean(axis=0)
    cov = Xc.T @ Dc
    vx = (Xc ** 2).sum(axis=0)
    vd = (Dc ** 2).sum(axis=0)
    degenerate = vx <= 1e-300
    denom = np.sqrt(np.outer(np.where(degenerate, 1.0, vx), np.where(vd > 0, vd, 1.0)))
    R = cov / denom
    R[degenerate, :] = 0.0
    R[:, vd <= 0] = 0.0
    R = np.clip(R, -1.0, 1.0)
    return R, np.abs(R) >= SIGNIFICANCE, degenerate


def _fmt_row(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def save_model(model: LdaModel, path: str | os.PathLike) -> None:
    k, p, g = model.n_functions, model.p, model.g
    lines = [
        f"{MAGIC} {FORMAT_VERSION}",
        f"p {p}",
        f"g {g}",
        f"k {k}",
        "labels " + " ".join(str(int(lab)) for lab in model.group_labels),
        f"regularization {model.regularization_used!r}",
        f"training_accuracy {model.training_accuracy!r}",
        "coefficients",
        *(_fmt_row(r) for r in model.coefficients),
        "constants",
        _fmt_row(model.constants),
        "centroids",
        *(_fmt_row(r) for r in model.centroids),
        "eigenvalues",
        _fmt_row(model.eigenvalues),
        "variance_pct",
        _fmt_row(model.variance_pct),
        "canonical_correlations",
        _fmt_row(model.canonical_correlations),
        "structure_matrix",
        *(_fmt_row(r) for r in model.structure_matrix),
        "end",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(
    path: str | os.PathLike, expect_p: int | None = None, expect_g: int | None = None, allow_mismatch: bool = False
) -> LdaModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh.read().splitlines() if ln.strip()]
    it = iter(lines)

    def take(what):
        try:
            return next(it)
        except StopIteration:
            raise ModelFormatError(f"truncated model file: missing {what}") from None

    def keyed(key):
        parts = take(key).split()
        if not parts or parts[0] != key:
            raise ModelFormatError(f"expected {key!r} line")
        return parts[1:]

    def block(name, rows, cols):
        if take(name) != name:
            raise ModelFormatError(f"expected {name!r} block")
        out = []
        for _ in range(rows):
            vals = take(name).split()
            if len(vals) != cols:
                raise ModelFormatError(f"{name}: expected {cols} values per row")
            out.append([float(v) for v in vals])
        return np.array(out, dtype=np.float64).reshape(rows, cols)

    head = take("magic").split()
    if len(head) != 2 or head[0] != MAGIC:
        raise ModelFormatError("not a rssicount model file (bad magic)")
    if head[1] != str(FORMAT_VERSION):
        raise ModelFormatError(f"unsupported model version {head[1]}")
    try:
        p = int(keyed("p")[0])
        g = int(keyed("g")[0])
        k = int(keyed("k")[0])
        labels = tuple(int(v) for v in keyed("labels"))
        ridge = float(keyed("regularization")[0])
        acc = float(keyed("training_accuracy")[0])
    except (IndexError, ValueError):
        raise ModelFormatError("malformed model header") from None
    if len(labels) != g:
        raise ModelFormatError("label count does not match g")
    if not allow_mismatch:
        if expect_p is not None and expect_p != p:
            raise DimensionError(f"model has p={p}, expected {expect_p}")
        if expect_g is not None and expect_g != g:
            raise DimensionError(f"model has g={g}, expected {expect_g}")
    try:
        coef = block("coefficients", k, p)
        const = block("constants", 1, k)[0]
        cent = block("centroids", g, k)
        evals = block("eigenvalues", 1, k)[0]
        pct = block("variance_pct", 1, k)[0]
        canon = block("canonical_correlations", 1, k)[0]
        smat = block("structure_matrix", p, k)
    except ValueError:
        raise ModelFormatError("non-numeric matrix entry") from None
    if take("end") != "end":
        raise ModelFormatError("missing end marker")
    return LdaModel(coef, const, cent, evals, pct, canon, smat, labels, ridge, acc)


def format_tables(model: LdaModel, dataset, labels=None, names: Sequence[str] = FEATURE_NAMES) -> str:
    """Plain-text report: equality of group means, eigenvalues, structure matrix, coefficients."""
    X, y = _coerce(dataset, labels)
    k = model.n_functions
    out = ["Test of equality of group means", f"{'variable':<14}{'Wilks lambda':>14}{'F':>12}{'p-value':>12}"]
    for row in group_stats_table(X, y, names):
        out.append(f"{row.variable:<14}{row.wilks_lambda:>14.3f}{row.f_stat:>12.3f}{row.p_value:>12.3g}")
    out += ["", "Eigenvalues", f"{'function':<10}{'eigenvalue':>12}{'% variance':>12}{'canonical r':>13}"]
    for j in range(k):
        out.append(
            f"{j + 1:<10}{model.eigenvalues[j]:>12.3f}{model.variance_pct[j]:>12.1f}{model.canonical_correlations[j]:>13.3f}"
        )
    R, sig, _ = structure_matrix(model, X, y)
    fn_head = "".join(f"{j + 1:>10}" for j in range(k))
    out += ["", "Structure matrix (* |r| >= 0.3)", f"{'variable':<14}{fn_head}"]
    for i in range(model.p):
        cells = "".join(f"{R[i, j]:>9.3f}{'*' if sig[i, j] else ' '}" for j in range(k))
        out.append(f"{names[i]:<14}{cells}")
    out += ["", "Canonical discriminant function coefficients", f"{'variable':<14}{fn_head}"]
    for i in range(model.p):
        out.append(f"{names[i]:<14}" + "".join(f"{model.coefficients[j, i]:>10.3f}" for j in range(k)))
    out.append(f"{'(constant)':<14}" + "".join(f"{c:>10.3f}" for c in model.constants))
    out += ["", f"Resubstitution accuracy: {model.training_accuracy:.4f}"]
    if model.regularization_used:
        out.append(f"Ridge regularization: {model.regularization_used:.3g}")
    return "\n".join(out) + "\n"


def tables_csv(model: LdaModel, dataset, labels=None, names: Sequence[str] = FEATURE_NAMES) -> dict[str, str]:
    """The four training tables as CSV strings keyed by table name."""
    import csv
    import io

    X, y = _coerce(dataset, labels)
    k = model.n_functions
    fns = [f"function_{j + 1}" for j in range(k)]

    def render(header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()

    R, _, _ = structure_matrix(model, X, y)
    return {
        "group_means_test": render(
            ["variable", "wilks_lambda", "f", "p_value"],
            [[r.variable, r.wilks_lambda, r.f_stat, r.p_value] for r in group_stats_table(X, y, names)],
        ),
        "eigenvalues": render(
            ["function", "eigenvalue", "variance_pct", "canonical_correlation"],
            [[j + 1, model.eigenvalues[j], model.variance_pct[j], model.canonical_correlations[j]] for j in range(k)],
        ),
        "structure_matrix": render(["variable", *fns], [[names[i], *R[i]] for i in range(model.p)]),
        "coefficients": render(
            ["variable", *fns],
            [[names[i], *model.coefficients[:, i]] for i in range(model.p)] + [["(constant)", *model.constants]],
        ),
    }

