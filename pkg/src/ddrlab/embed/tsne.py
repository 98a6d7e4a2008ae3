"""Exact (dense O(n^2)) t-SNE.

High-dimensional affinities use per-point Gaussian kernels calibrated by
bisection so each row's entropy matches log2(perplexity); the joint form is
P = (P_cond + P_cond.T) / (2n). Low-dimensional affinities are Student-t with
one degree of freedom. The descent minimizes KL(P || Q) with the gradient
4 * sum_j (p_ij - q_ij) (y_i - y_j) / (1 + ||y_i - y_j||^2), plain momentum,
early exaggeration, and per-iteration recentering.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

P_FLOOR = 1e-12


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    learning_rate: float = 200.0
    momentum_start: float = 0.5
    momentum_final: float = 0.8
    momentum_switch: int = 250
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.perplexity <= 1:
            raise ValueError("perplexity must be > 1")


@dataclass
class Embedding2D:
    """Centered 2-D point set with carried-through labels and the KL trace.

    kl_trace[0] is the KL at the initial layout; kl_trace[t] is the KL after
    update t (always against the unexaggerated P).
    """

    points: np.ndarray
    kl_trace: np.ndarray
    seed: int
    ids: list[str] = field(default_factory=list)
    kinds: list[str] = field(default_factory=list)
    degrees: np.ndarray = field(default_factory=lambda: np.zeros(0))
    classes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    pca_dims: int | None = None

    @property
    def final_kl(self) -> float:
        return float(self.kl_trace[-1])


def squared_distances(x: np.ndarray) -> np.ndarray:
    """Dense pairwise squared Euclidean distances with an exact zero diagonal."""
    x = np.asarray(x, dtype=np.float64)
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def perplexity_calibrate(
    sq_distances: np.ndarray, perplexity: float, tol: float = 1e-5, max_iter: int = 128
) -> np.ndarray:
    """Conditional affinities P[i, j] = p_{j|i} hitting the target perplexity.

    Bisection runs on the per-row precision beta_i. Distances are normalized by
    their off-diagonal mean first, so globally rescaled inputs calibrate to the
    identical matrix. Rows that cannot reach the target within ``tol`` keep
    their best effort and raise a warning.
    """
    d = np.asarray(sq_distances, dtype=np.float64)
    n = d.shape[0]
    if d.ndim != 2 or d.shape[1] != n:
        raise ValueError(f"expected a square distance matrix, got {d.shape}")
    if n < 3:
        raise ValueError(f"need at least 3 points, got {n}")
    if not np.allclose(np.diag(d), 0.0):
        raise ValueError("distance matrix must have a zero diagonal")
    if d.min() < 0 or not np.allclose(d, d.T):
        raise ValueError("distance matrix must be symmetric and non-negative")
    if perplexity >= n - 1:
        raise ValueError(f"perplexity must be < n-1 = {n - 1}, got {perplexity}")

    off = ~np.eye(n, dtype=bool)
    mean_off = d[off].mean()
    if mean_off > 0:
        d = d / mean_off
    shift = np.where(off, d, np.inf).min(axis=1)  # keeps the largest term at exp(0)

    target = np.log2(perplexity)
    beta = np.ones(n)
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    p = np.zeros((n, n))
    achieved = np.zeros(n, dtype=bool)
    for _ in range(max_iter):
        w = np.exp(-beta[:, None] * (d - shift[:, None]))
        w[~off] = 0.0
        p = w / w.sum(axis=1, keepdims=True)
        plogp = np.where(p > 0, p * np.log2(np.maximum(p, P_FLOOR)), 0.0)
        entropy = -plogp.sum(axis=1)
        achieved = np.abs(2.0**entropy - perplexity) <= tol
        if achieved.all():
            break
        too_flat = entropy > target  # beta too small
        lo = np.where(~achieved & too_flat, beta, lo)
        hi = np.where(~achieved & ~too_flat, beta, hi)
        grow = ~achieved & too_flat & np.isinf(hi)
        shrink = ~achieved & ~too_flat & (lo == 0)
        mid = np.where(np.isinf(hi), beta, 0.5 * (lo + hi))
        beta = np.where(achieved, beta, np.where(grow, beta * 2.0, np.where(shrink, beta * 0.5, mid)))
    if not achieved.all():
        warnings.warn(
            f"perplexity calibration fell short of tolerance {tol} on "
            f"{int((~achieved).sum())} of {n} rows; using best effort"
        )
    return p


def joint_probabilities(p_conditional: np.ndarray) -> np.ndarray:
    n = p_conditional.shape[0]
    return (p_conditional + p_conditional.T) / (2.0 * n)


def _student_t(points: np.ndarray) -> tuple[np.ndarray, float]:
    num = 1.0 / (1.0 + squared_distances(points))
    np.fill_diagonal(num, 0.0)
    return num, float(num.sum())


def kl_and_grad(p: np.ndarray, points: np.ndarray) -> tuple[float, np.ndarray]:
    """KL(P || Q) and its exact gradient for a 2-D layout."""
    p = np.asarray(p, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    if not np.allclose(p, p.T) or abs(p.sum() - 1.0) > 1e-8:
        raise ValueError("P must be symmetric and sum to 1")
    num, z = _student_t(points)
    q = num / z
    logq = np.log(np.maximum(q, P_FLOOR))
    logp = np.log(np.maximum(p, P_FLOOR))
    kl = float(np.sum(p * (logp - logq)))

    pq_num = (p - q) * num
    grad = 4.0 * (pq_num.sum(axis=1)[:, None] * points - pq_num @ points)
    return kl, grad


def _kl_only(p: np.ndarray, points: np.ndarray) -> float:
    num, z = _student_t(points)
    q = np.maximum(num / z, P_FLOOR)
    logp = np.log(np.maximum(p, P_FLOOR))
    return float(np.sum(p * (logp - np.log(q))))


def tsne(
    x: np.ndarray,
    config: TsneConfig = TsneConfig(),
    ids: list[str] | None = None,
    kinds: list[str] | None = None,
    degrees: np.ndarray | None = None,
    classes: np.ndarray | None = None,
    pca_dims: int | None = None,
) -> Embedding2D:
    """Embed an n x d matrix to 2-D; deterministic for a given config."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 5:
        raise ValueError(f"need at least 5 points, got {n}")

    p = joint_probabilities(perplexity_calibrate(squared_distances(x), config.perplexity))

    rng = np.random.Generator(np.random.PCG64(config.seed))
    points = rng.standard_normal((n, 2)) * 1e-2  # N(0, 1e-4)
    velocity = np.zeros_like(points)
    trace = [_kl_only(p, points)]

    p_exaggerated = p * config.early_exaggeration
    for it in range(1, config.iterations + 1):
        p_use = p_exaggerated if it <= config.exaggeration_iters else p
        kl_now, grad = _step_kl_grad(p_use, points)
        if not np.isfinite(kl_now) or not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite t-SNE state at iteration {it}")
        momentum = config.momentum_start if it <= config.momentum_switch else config.momentum_final
        velocity = momentum * velocity - config.learning_rate * grad
        points = points + velocity
        points = points - points.mean(axis=0)
        trace.append(_kl_only(p, points))

    return Embedding2D(
        points=points,
        kl_trace=np.array(trace),
        seed=config.seed,
        ids=list(ids) if ids is not None else [],
        kinds=list(kinds) if kinds is not None else [],
        degrees=np.asarray(degrees, np.float64) if degrees is not None else np.zeros(0),
        classes=np.asarray(classes, np.int64) if classes is not None else np.zeros(0, np.int64),
        pca_dims=pca_dims,
    )


def _step_kl_grad(p_use: np.ndarray, points: np.ndarray) -> tuple[float, np.ndarray]:
    """Gradient against the (possibly exaggerated) affinities, skipping checks."""
    num, z = _student_t(points)
    q = num / z
    pq_num = (p_use - q) * num
    grad = 4.0 * (pq_num.sum(axis=1)[:, None] * points - pq_num @ points)
    kl = float(np.sum(p_use * (np.log(np.maximum(p_use, P_FLOOR)) - np.log(np.maximum(q, P_FLOOR)))))
    return kl, grad


def save_embedding(emb: Embedding2D, path: str | os.PathLike, extra_header: str = "") -> None:
    header = f"#embedding v1 seed={emb.seed} kl={emb.final_kl!r}"
    header += f" pca={'none' if emb.pca_dims is None else emb.pca_dims}"
    if extra_header:
        header += " " + extra_header
    lines = [header]
    n = emb.points.shape[0]
    ids = emb.ids or [f"p{i}" for i in range(n)]
    kinds = emb.kinds or ["-"] * n
    degrees = emb.degrees if emb.degrees.size else np.zeros(n)
    classes = emb.classes if emb.classes.size else np.full(n, -1, dtype=np.int64)
    for i in range(n):
        cls = "-" if classes[i] < 0 else str(int(classes[i]))
        lines.append(
            f"{ids[i]}\t{kinds[i]}\t{float(degrees[i])!r}\t{cls}"
            f"\t{float(emb.points[i, 0])!r}\t{float(emb.points[i, 1])!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_embedding(path: str | os.PathLike) -> Embedding2D:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#embedding v1 "):
        raise ValueError(f"{path}: not an embedding TSV")
    tokens = dict(t.split("=", 1) for t in lines[0][1:].split()[2:] if "=" in t)
    ids, kinds, degrees, classes, xs, ys = [], [], [], [], [], []
    for line in lines[1:]:
        if not line.strip():
            continue
        ident, kind, degree, cls, px, py = line.split("\t")
        ids.append(ident)
        kinds.append(kind)
        degrees.append(float(degree))
        classes.append(-1 if cls == "-" else int(cls))
        xs.append(float(px))
        ys.append(float(py))
    pca_token = tokens.get("pca", "none")
    return Embedding2D(
        points=np.column_stack([xs, ys]),
        kl_trace=np.array([float(tokens.get("kl", "nan"))]),
        seed=int(tokens.get("seed", "0")),
        ids=ids,
        kinds=kinds,
        degrees=np.array(degrees),
        classes=np.array(classes, dtype=np.int64),
        pca_dims=None if pca_token == "none" else int(pca_token),
    )
