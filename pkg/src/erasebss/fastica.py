"""Self-contained ICA engine: PCA whitening, symmetric fixed-point FastICA
with a tanh contrast, and component-rejection reconstruction.

The decomposition follows the square-mixing convention: for whitenable
full-rank input X (channels x samples), A @ S reconstructs the centered X,
sources S have unit variance, and W @ X_centered = S.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RANK_EPS = 1e-12


def _as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


class IcaError(RuntimeError):
    """Numerical failure inside the ICA engine."""


class RankDeficiencyError(IcaError):
    """Covariance rank is below the requested component count."""

    def __init__(self, rank: int, requested: int):
        self.rank = rank
        self.requested = requested
        super().__init__(
            f"data rank {rank} is below the requested component count {requested}"
        )


@dataclass(frozen=True)
class WhiteningTransform:
    """Centering plus the linear map that makes the data covariance identity.

    ``matrix`` is (rank, channels); ``inverse`` (channels, rank) maps whitened
    data back onto the retained subspace.
    """

    means: np.ndarray
    matrix: np.ndarray
    inverse: np.ndarray
    rank: int

    def apply(self, data: np.ndarray) -> np.ndarray:
        return self.matrix @ (data - self.means[:, None])


def center_and_whiten(data: np.ndarray, n_components: int | None = None
                      ) -> tuple[np.ndarray, WhiteningTransform]:
    """Center rows and whiten via eigendecomposition of the covariance.

    Eigenvalues below RANK_EPS times the largest are treated as null space;
    if fewer than ``n_components`` (default: all channels) directions remain,
    a :class:`RankDeficiencyError` names the effective rank.
    """
    data = np.asarray(data, dtype=np.float64)
    n_ch, n_samples = data.shape
    if n_samples <= n_ch:
        raise IcaError(f"need more samples ({n_samples}) than channels ({n_ch})")
    requested = n_ch if n_components is None else int(n_components)
    means = data.mean(axis=1)
    centered = data - means[:, None]
    cov = centered @ centered.T / (n_samples - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]
    max_ev = float(eigvals[0])
    rank = 0 if max_ev <= 0 else int(np.sum(eigvals >= RANK_EPS * max_ev))
    if rank < requested:
        raise RankDeficiencyError(rank, requested)
    keep = slice(0, requested)
    scale = 1.0 / np.sqrt(eigvals[keep])
    matrix = scale[:, None] * eigvecs[:, keep].T
    inverse = eigvecs[:, keep] * np.sqrt(eigvals[keep])[None, :]
    transform = WhiteningTransform(means, matrix, inverse, requested)
    return matrix @ centered, transform


@dataclass(frozen=True)
class IcaDiagnostics:
    converged: bool
    iterations: int
    restarts: int
    final_delta: float


@dataclass(frozen=True)
class IcaDecomposition:
    """Mixing matrix A, unmixing W, unit-variance sources S and the whitening
    transform that produced them. Column j of A holds IC j's per-channel
    loadings."""

    mixing: np.ndarray
    unmixing: np.ndarray
    sources: np.ndarray = field(repr=False)
    whitening: WhiteningTransform
    diagnostics: IcaDiagnostics
    seed: int

    @property
    def n_components(self) -> int:
        return self.mixing.shape[1]

    @property
    def n_channels(self) -> int:
        return self.mixing.shape[0]


def _sym_orth(w: np.ndarray) -> np.ndarray:
    """Symmetric orthogonalization: W <- (W W^T)^(-1/2) W."""
    vals, vecs = np.linalg.eigh(w @ w.T)
    if vals[0] <= 0:
        raise IcaError("degenerate update matrix during orthogonalization")
    inv_sqrt = (vecs * (1.0 / np.sqrt(vals))[None, :]) @ vecs.T
    return inv_sqrt @ w


def _fixed_point(z: np.ndarray, w0: np.ndarray, max_iter: int, tol: float
                 ) -> tuple[np.ndarray, bool, int, float]:
    n_samples = z.shape[1]
    w = _sym_orth(w0)
    delta = np.inf
    for it in range(1, max_iter + 1):
        u = w @ z
        g = np.tanh(u)
        g_prime_mean = (1.0 - g ** 2).mean(axis=1)
        w_new = (g @ z.T) / n_samples - g_prime_mean[:, None] * w
        w_new = _sym_orth(w_new)
        delta = float(np.max(1.0 - np.abs(np.einsum("ij,ij->i", w_new, w))))
        w = w_new
        if delta <= tol:
            return w, True, it, delta
    return w, False, max_iter, delta


def fastica(data: np.ndarray, max_iter: int = 1000, tol: float = 1e-6,
            rng_seed: int = 0, n_restarts: int = 5) -> IcaDecomposition:
    """Symmetric fixed-point FastICA with g(u) = tanh(u).

    Convergence requires min_i |diag(W_new W_old^T)_i| >= 1 - tol. On
    non-convergence the iteration restarts from a fresh seeded orthogonal
    initialization, up to ``n_restarts`` times; if no attempt converges the
    best (last) estimate is returned with ``diagnostics.converged`` False.
    """
    if max_iter < 1:
        raise IcaError(f"max_iter must be >= 1, got {max_iter}")
    z, transform = center_and_whiten(data)
    n_comp = transform.rank
    seeds = _as_seed_sequence(rng_seed).spawn(1 + n_restarts)
    w = None
    converged = False
    total_iters = 0
    restarts = 0
    delta = np.inf
    for attempt, seq in enumerate(seeds):
        rng = np.random.default_rng(seq)
        w0 = np.linalg.qr(rng.standard_normal((n_comp, n_comp)))[0]
        w, converged, iters, delta = _fixed_point(z, w0, max_iter, tol)
        total_iters += iters
        restarts = attempt
        if converged:
            break
    sources = w @ z
    unmixing = w @ transform.matrix
    mixing = transform.inverse @ w.T
    diag = IcaDiagnostics(converged=converged, iterations=total_iters,
                          restarts=restarts, final_delta=delta)
    return IcaDecomposition(mixing=mixing, unmixing=unmixing, sources=sources,
                            whitening=transform, diagnostics=diag, seed=rng_seed)


def save_decomposition(prefix, dec: IcaDecomposition) -> "Path":
    """Serialize a decomposition for audit and replay.

    Writes ``<prefix>.json`` metadata (shapes, seed, iterations, achieved
    tolerance) plus little-endian float32 sidecars for the mixing, unmixing
    and source matrices.
    """
    import json
    from pathlib import Path

    prefix = Path(prefix)
    matrices = {"mixing": dec.mixing, "unmixing": dec.unmixing, "sources": dec.sources}
    meta = {
        "format_version": 1,
        "seed": repr(dec.seed),
        "iterations": dec.diagnostics.iterations,
        "restarts": dec.diagnostics.restarts,
        "converged": dec.diagnostics.converged,
        "final_tolerance": dec.diagnostics.final_delta,
        "means": dec.whitening.means.tolist(),
        "rank": dec.whitening.rank,
        "shapes": {name: list(m.shape) for name, m in matrices.items()},
        "files": {},
    }
    for name, matrix in matrices.items():
        raw = prefix.with_name(prefix.name + f".{name}.raw")
        matrix.astype("<f4").tofile(raw)
        meta["files"][name] = raw.name
    path = prefix.with_name(prefix.name + ".json")
    path.write_text(json.dumps(meta, indent=1))
    return path


def load_decomposition_matrices(path) -> dict:
    """Read back the matrices and metadata written by
    :func:`save_decomposition`."""
    import json
    from pathlib import Path

    path = Path(path)
    meta = json.loads(path.read_text())
    out = {"meta": meta}
    for name, fname in meta["files"].items():
        shape = tuple(meta["shapes"][name])
        raw = np.fromfile(path.with_name(fname), dtype="<f4")
        if raw.size != shape[0] * shape[1]:
            raise IcaError(f"{fname}: expected {shape[0] * shape[1]} values, "
                           f"found {raw.size}")
        out[name] = raw.astype(np.float64).reshape(shape)
    return out


def reconstruct_without(dec: IcaDecomposition, rejected) -> np.ndarray:
    """Remix with the given source rows zeroed; re-adds channel means.

    An empty rejection set reproduces the decomposition's input (within
    numerical error)."""
    rejected = sorted(set(int(i) for i in rejected))
    if rejected and (rejected[0] < 0 or rejected[-1] >= dec.n_components):
        raise IndexError(
            f"rejected IC index out of range 0..{dec.n_components - 1}: {rejected}"
        )
    sources = dec.sources.copy()
    for i in rejected:
        sources[i] = 0.0
    return dec.mixing @ sources + dec.whitening.means[:, None]
