"""Dense symmetric linear algebra.

Symmetric matrices are plain ``numpy`` arrays; :func:`sym_matrix` validates
and symmetrizes them. Eigendecomposition uses cyclic Jacobi rotations in
round-robin (tournament) order, so that each round applies ``p // 2``
disjoint rotations as one vectorized update.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, DomainError, MalformedRow, NoConvergence, NonFinite, NotSymmetric

DEFAULT_TOL = 1e-12
MAX_SWEEPS = 100


def sym_matrix(a) -> np.ndarray:
    """Return ``a`` as a float symmetric matrix, averaging it with its transpose."""
    arr = np.array(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("matrix contains NaN or Inf")
    return 0.5 * (arr + arr.T)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues in ascending order with matching eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0

    def __post_init__(self):
        self.eigenvalues.setflags(write=False)
        self.eigenvectors.setflags(write=False)

    @property
    def order(self) -> int:
        return self.eigenvalues.shape[0]


@lru_cache(maxsize=None)
def _tournament(m: int):
    """Round-robin schedule for ``m`` (even) indices.

    Returns the first layout and, for each round, the index pair that gathers
    the next round's layout from the current one. In every layout the pairs
    rotated together sit at positions ``(k, k + m // 2)``.
    """
    h = m // 2
    players = list(range(m))
    layouts = []
    for _ in range(m - 1):
        layouts.append(np.array(players[:h] + players[:h - 1:-1], dtype=np.intp))
        players = [players[0], players[-1]] + players[1:-1]
    moves = []
    for r in range(m - 1):
        current, following = layouts[r], layouts[(r + 1) % (m - 1)]
        position = np.empty(m, dtype=np.intp)
        position[current] = np.arange(m)
        move = position[following]
        moves.append((move[:, None], move))
    return layouts[0], tuple(moves)


@lru_cache(maxsize=None)
def _pair_slots(m: int):
    h = m // 2
    top = np.arange(h)
    # flat offsets of W[k, k], W[k+h, k+h], W[k, k+h] and W[k+h, k]
    return top * (m + 1), (top + h) * (m + 1), top * m + top + h, (top + h) * m + top


def _rotate_pairs(W: np.ndarray, Q: np.ndarray, active: np.ndarray) -> None:
    """One Jacobi round on a stack: annihilate ``W[b, k, k + h]`` for every k, in place.

    Matrices with ``active[b]`` false get the identity rotation and keep
    their entries bit for bit.
    """
    B, m, _ = W.shape
    h = m // 2
    pp, qq, pq, qp = _pair_slots(m)
    flat = W.reshape(B, -1)
    apq2 = 2.0 * flat[:, pq]
    tau = flat[:, qq] - flat[:, pp]
    # tan of the rotation angle, written without divisions that can overflow
    den = np.abs(tau) + np.hypot(tau, apq2)
    den[den == 0.0] = 1.0
    t = np.where(tau < 0.0, -apq2, apq2) / den
    t[~active] = 0.0
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c

    cc, ss = c[:, None, :], s[:, None, :]
    for M in (W, Q):
        x0 = M[:, :, :h].copy()
        x1 = M[:, :, h:]
        M[:, :, :h] = cc * x0 - ss * x1
        M[:, :, h:] = ss * x0 + cc * x1
    cc, ss = c[:, :, None], s[:, :, None]
    y0 = W[:, :h].copy()
    y1 = W[:, h:]
    W[:, :h] = cc * y0 - ss * y1
    W[:, h:] = ss * y0 + cc * y1
    live = np.flatnonzero(active)[:, None]
    flat[live, pq] = 0.0
    flat[live, qp] = 0.0


def _off_norms(W: np.ndarray) -> np.ndarray:
    off = W.copy()
    i = np.arange(W.shape[1])
    off[:, i, i] = 0.0
    return np.sqrt(np.sum(off * off, axis=(1, 2)))


def _jacobi(stack: np.ndarray, tol: float, max_sweeps: int) -> list[SpectralDecomposition]:
    """Cyclic Jacobi on a ``(B, p, p)`` stack of symmetric matrices, all at once."""
    B, p, _ = stack.shape
    scales = np.sqrt(np.sum(stack * stack, axis=(1, 2)))
    if p == 1:
        return [SpectralDecomposition(a[0].copy(), np.eye(1), 0) for a in stack]

    # odd orders get a decoupled zero row/column that is dropped at the end
    m = p + (p % 2)
    padded = np.zeros((B, m, m))
    padded[:, :p, :p] = stack
    first, moves = _tournament(m)
    W = np.ascontiguousarray(padded[:, first[:, None], first])
    Q = np.ascontiguousarray(np.broadcast_to(np.eye(m)[:, first], (B, m, m)))

    thresholds = tol * scales
    sweeps = np.zeros(B, dtype=int)
    active = np.ones(B, dtype=bool)
    # one extra sweep after the threshold is met; convergence is quadratic,
    # so it takes the eigenvectors to roundoff level
    cleanup = np.zeros(B, dtype=bool)
    while True:
        off = _off_norms(W)
        active &= ~(cleanup | (off == 0.0))
        if not active.any():
            break
        cleanup |= active & (off <= thresholds)
        stuck = active & ~cleanup & (sweeps >= max_sweeps)
        if stuck.any():
            raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps (off={off[stuck].max():.3e})")
        sweeps[active] += 1
        for rows, cols in moves:
            _rotate_pairs(W, Q, active)
            W = W[:, rows, cols]
            Q = Q[:, :, cols]

    out = []
    for b in range(B):
        e = np.diagonal(W[b]).copy()
        V = Q[b]
        if m != p:
            # the padding column of Q is the unit vector on index p
            keep = np.abs(V[p, :]) < 0.5
            e = e[keep]
            V = V[:p, keep]
        order = np.argsort(e, kind="stable")
        e = e[order]
        e[np.abs(e) <= thresholds[b]] = 0.0
        out.append(SpectralDecomposition(e, np.ascontiguousarray(V[:, order]), int(sweeps[b])))
    return out


def eigendecompose(a, tol: float = DEFAULT_TOL, max_sweeps: int = MAX_SWEEPS, basis=None) -> SpectralDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Iterates until the off-diagonal Frobenius mass drops below
    ``tol * ||a||_F``. Eigenvalues within ``tol * ||a||_F`` of zero are set to
    exactly zero (PSD projection of roundoff); larger negative eigenvalues are
    returned unchanged.

    ``basis`` is an optional orthogonal matrix to start from, typically the
    eigenvectors of a nearby matrix. Rotations then begin from
    ``basis^T a basis``, which is close to diagonal and needs fewer sweeps.

    Raises
    ------
    NonFinite
        If ``a`` contains NaN or Inf.
    NoConvergence
        If ``max_sweeps`` sweeps do not reach the tolerance.
    """
    return eigendecompose_many([a], tol, max_sweeps, basis)[0]


def eigendecompose_many(mats, tol: float = DEFAULT_TOL, max_sweeps: int = MAX_SWEEPS, basis=None) -> list[SpectralDecomposition]:
    """:func:`eigendecompose` for several matrices of one order, rotated together.

    Each result is the same as decomposing that matrix alone; batching only
    saves interpreter overhead, which dominates for small and medium orders.
    """
    stack = [sym_matrix(a) for a in mats]
    if not stack:
        return []
    p = stack[0].shape[0]
    if any(a.shape != (p, p) for a in stack):
        raise DimensionMismatch("all matrices in a batch must have the same order")
    A = np.stack(stack)
    if basis is not None:
        B = np.asarray(basis, dtype=float)
        if B.shape != (p, p):
            raise DimensionMismatch(f"basis must be {p} x {p}, got {B.shape}")
        if np.linalg.norm(B.T @ B - np.eye(p)) > 1e-8:
            raise DomainError("basis must have orthonormal columns")
        inner = _jacobi(np.stack([sym_matrix(B.T @ a @ B) for a in A]), tol, max_sweeps)
        return [SpectralDecomposition(d.eigenvalues, np.ascontiguousarray(B @ d.eigenvectors), d.sweeps) for d in inner]
    return _jacobi(A, tol, max_sweeps)


def assemble(e, V) -> np.ndarray:
    """Return ``V diag(e) V^T``, symmetrized."""
    e = np.asarray(e, dtype=float)
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1] or e.shape != (V.shape[0],):
        raise DimensionMismatch(f"eigenvalues {e.shape} incompatible with basis {V.shape}")
    out = (V * e) @ V.T
    return 0.5 * (out + out.T)


def matrix_function(d: SpectralDecomposition, fn) -> np.ndarray:
    """Apply a scalar function to the spectrum and reassemble."""
    return assemble(fn(d.eigenvalues), d.eigenvectors)


def condition_number(d: SpectralDecomposition) -> float:
    """Largest over smallest eigenvalue; ``inf`` for a singular spectrum."""
    e = d.eigenvalues
    if e[0] <= 0.0:
        return math.inf
    return float(e[-1] / e[0])


def frobenius_norm(a) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float)))


def spectral_distance(a, b) -> float:
    """Largest singular value of ``a - b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    e = eigendecompose(a - b).eigenvalues
    return float(max(abs(e[0]), abs(e[-1])))


def read_square_csv(path, sym_tol: float = 1e-8) -> np.ndarray:
    """Read a ``p x p`` matrix from CSV; a non-numeric first row is a header."""
    with Path(path).open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if rows:
        try:
            [float(cell) for cell in rows[0]]
        except ValueError:
            rows = rows[1:]
    try:
        values = [[float(cell) for cell in row] for row in rows]
    except ValueError as exc:
        raise MalformedRow(f"{path}: non-numeric entry ({exc})") from None
    p = len(values)
    if p == 0 or any(len(row) != p for row in values):
        raise DimensionMismatch(f"{path}: expected a square matrix, got {p} rows")
    arr = np.array(values)
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{path}: matrix contains NaN or Inf")
    asym = float(np.max(np.abs(arr - arr.T)))
    if asym > sym_tol * max(frobenius_norm(arr), np.finfo(float).tiny):
        raise NotSymmetric(f"{path}: asymmetry {asym:.3e} exceeds tolerance")
    return sym_matrix(arr)


def write_square_csv(path, a) -> None:
    a = np.asarray(a, dtype=float)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in a:
            writer.writerow([repr(float(x)) for x in row])
