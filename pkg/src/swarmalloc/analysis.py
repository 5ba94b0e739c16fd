"""Numerical instruments for the consensus dynamics.

``contraction_rate`` evaluates the rate formula used by the training
penalty: the infinity log-norm of diag(tau) + (A^T kron S) + diag(gate),
computed row-wise without materializing the Kronecker product.  All terms
are non-negative there, so its value is always >= 0.  The sign-carrying
quantity that actually bounds trajectory divergence is the log-norm of the
dynamics Jacobian, exposed as ``jacobian_log_norm``: negative values certify
exponential contraction at rate |value|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceeded, DegenerateFit, ShapeMismatch


def log_norm_inf(x: np.ndarray) -> float:
    """Infinity log-norm: max over rows of diagonal plus off-diagonal |sums|."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ShapeMismatch("matrix entries must be finite")
    diag = np.diag(x)
    return float(np.max(diag + np.abs(x).sum(axis=1) - np.abs(diag)))


def _coupling_rows(coupling: np.ndarray, support: np.ndarray):
    """Diagonal and absolute row sums of coupling^T kron support, by (state
    column q, agent i) blocks of the column-major vectorization."""
    diag = np.outer(np.diag(coupling), np.diag(support))         # (F, N)
    abs_rows = np.outer(np.abs(coupling).sum(axis=0), np.abs(support).sum(axis=1))
    return diag, abs_rows


def contraction_rate(tau: np.ndarray, coupling: np.ndarray, support: np.ndarray,
                     gate: np.ndarray, cap: int = 10 ** 6) -> float:
    """Rate formula of the soft training penalty; always >= 0 for valid
    parameters (non-negative tau/gate, PSD coupling, non-negative support)."""
    tau = np.asarray(tau, dtype=np.float64)
    gate = np.asarray(gate, dtype=np.float64)
    support = np.asarray(support, dtype=np.float64)
    coupling = np.asarray(coupling, dtype=np.float64)
    n, f = gate.shape
    if n * f > cap:
        raise BudgetExceeded(f"state dimension {n}*{f} exceeds cap {cap}")
    if support.shape != (n, n) or coupling.shape != (f, f) or tau.shape != (f,):
        raise ShapeMismatch("inconsistent shapes for contraction rate")
    diag, abs_rows = _coupling_rows(coupling, support)
    rows = tau[:, None] + gate.T + diag + (abs_rows - np.abs(diag))
    return float(rows.max())


def jacobian_log_norm(tau: np.ndarray, coupling: np.ndarray, support: np.ndarray,
                      gate: np.ndarray, cap: int = 10 ** 6) -> float:
    """Infinity log-norm of the state Jacobian -diag(tau + gate) - A^T kron S.

    Negative values certify contraction: for two state trajectories under
    identical inputs, ||x1(t) - x2(t)||_inf <= exp(value * t) * ||x1(0) - x2(0)||_inf.
    """
    tau = np.asarray(tau, dtype=np.float64)
    gate = np.asarray(gate, dtype=np.float64)
    n, f = gate.shape
    if n * f > cap:
        raise BudgetExceeded(f"state dimension {n}*{f} exceeds cap {cap}")
    diag, abs_rows = _coupling_rows(np.asarray(coupling), np.asarray(support))
    rows = -(tau[:, None] + gate.T) - diag + (abs_rows - np.abs(diag))
    return float(rows.max())


def dense_rate_matrix(tau: np.ndarray, coupling: np.ndarray, support: np.ndarray,
                      gate: np.ndarray) -> np.ndarray:
    """Explicit (N*F)x(N*F) matrix behind contraction_rate; test oracle."""
    n, f = gate.shape
    tau_full = np.broadcast_to(np.asarray(tau), (n, f))
    return (
        np.diag(tau_full.ravel(order="F"))
        + np.kron(np.asarray(coupling).T, np.asarray(support))
        + np.diag(np.asarray(gate).ravel(order="F"))
    )


def detect_clusters(trajectories: np.ndarray, tol: float = 1e-3,
                    window: int = 20) -> list[list[int]]:
    """Group agents whose states stay within tol of each other over the last
    ``window`` steps; the grouping is the transitive closure of that relation.

    Returns a partition as sorted lists, ordered by smallest member.
    """
    x = np.asarray(trajectories, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeMismatch(f"expected trajectories of shape (T, N, F), got {x.shape}")
    if x.shape[0] < window:
        raise ShapeMismatch(f"need at least window={window} steps, got {x.shape[0]}")
    tail = x[-window:]
    n = x.shape[1]
    gap = np.abs(tail[:, :, None, :] - tail[:, None, :, :]).max(axis=(0, 3))
    close = gap <= tol

    labels = [-1] * n
    clusters = []
    for i in range(n):
        if labels[i] >= 0:
            continue
        group = [i]
        labels[i] = len(clusters)
        queue = [i]
        while queue:
            a = queue.pop()
            for b in range(n):
                if labels[b] < 0 and close[a, b]:
                    labels[b] = labels[i]
                    group.append(b)
                    queue.append(b)
        clusters.append(sorted(group))
    return sorted(clusters, key=lambda c: c[0])


def cluster_spreads(trajectories: np.ndarray, clusters: list[list[int]]) -> np.ndarray:
    """Per-step within-cluster spread: max pairwise infinity distance.

    Shape (T, n_clusters); singleton clusters have zero spread.
    """
    x = np.asarray(trajectories, dtype=np.float64)
    out = np.zeros((x.shape[0], len(clusters)))
    for k, members in enumerate(clusters):
        if len(members) < 2:
            continue
        sub = x[:, members]
        out[:, k] = np.abs(sub[:, :, None, :] - sub[:, None, :, :]).max(axis=(1, 2, 3))
    return out


@dataclass(frozen=True)
class DecayFit:
    cluster: int
    rate: float       # slope of log-spread vs time; negative when contracting
    residual: float   # RMS residual of the linear fit

    @property
    def contracting(self) -> bool:
        return self.rate < 0.0


def cluster_decay_fit(trajectories: np.ndarray, clusters: list[list[int]],
                      dt: float = 1.0, floor: float = 1e-12) -> list[DecayFit]:
    """Least-squares exponential decay rate of the within-cluster spread.

    Clusters whose spread never rises above ``floor`` for at least two steps
    carry no signal; if every cluster is like that, raises DegenerateFit.
    """
    spreads = cluster_spreads(trajectories, clusters)
    times = np.arange(spreads.shape[0]) * dt
    fits = []
    for k in range(spreads.shape[1]):
        keep = spreads[:, k] > floor
        if keep.sum() < 2:
            continue
        t = times[keep]
        y = np.log(spreads[keep, k])
        slope, intercept = np.polyfit(t, y, 1)
        residual = float(np.sqrt(np.mean((slope * t + intercept - y) ** 2)))
        fits.append(DecayFit(cluster=k, rate=float(slope), residual=residual))
    if not fits:
        raise DegenerateFit("all cluster spreads are below the numerical floor")
    return fits
