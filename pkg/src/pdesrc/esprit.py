"""Multidimensional harmonic retrieval from generalised-measurement tensors.

Implements multilevel Hankel assembly, subspace shift-invariance solves with a
random-linear-combination joint diagonalisation, Vandermonde amplitude fits,
and Cadzow-like structured low-rank denoising.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    DefectiveEigensystem,
    IllConditionedVandermonde,
    OrderTooLarge,
    ShapeError,
)
from .forward import MeasurementTensor

EIG_COND_CEILING = 1e10
MAX_BETA_RETRIES = 5


@dataclass(frozen=True)
class HarmonicEstimate:
    """Recovered superposition of damped multidimensional sinusoids."""

    model_order: int
    amplitudes: np.ndarray  # (M,) complex
    frequencies: np.ndarray  # (M, d) complex, unit modulus in the clean model
    singular_values: np.ndarray = field(default=None)
    vandermonde_condition: float = float("nan")

    def modulus_deviation(self) -> np.ndarray:
        """Per-source max deviation of |v| from 1 across dimensions."""
        if self.model_order == 0:
            return np.zeros(0)
        return np.max(np.abs(np.abs(self.frequencies) - 1.0), axis=1)


@dataclass(frozen=True)
class HankelStructure:
    """Shape bookkeeping tying a multilevel Hankel matrix back to its tensor."""

    tensor_shape: tuple
    window: tuple  # L_i per dimension

    def __post_init__(self):
        shape = tuple(int(s) for s in self.tensor_shape)
        win = tuple(int(w) for w in self.window)
        if len(shape) != len(win):
            raise ShapeError("window length must match tensor rank")
        for s, w in zip(shape, win):
            if not 1 <= w <= s:
                raise ShapeError(f"window {win} incompatible with tensor shape {shape}")
        object.__setattr__(self, "tensor_shape", shape)
        object.__setattr__(self, "window", win)

    @property
    def complement(self) -> tuple:
        return tuple(s - w + 1 for s, w in zip(self.tensor_shape, self.window))

    @property
    def matrix_shape(self) -> tuple:
        return int(np.prod(self.window)), int(np.prod(self.complement))

    def orbit_index(self) -> np.ndarray:
        """Linear tensor index k = l + j for every Hankel entry (l, j)."""
        L, J = self.window, self.complement
        l_idx = np.stack(np.unravel_index(np.arange(np.prod(L)), L))
        j_idx = np.stack(np.unravel_index(np.arange(np.prod(J)), J))
        combined = l_idx[:, :, None] + j_idx[:, None, :]
        return np.ravel_multi_index(list(combined), self.tensor_shape)


def default_window(tensor_shape: Sequence[int]) -> tuple:
    """L_i = floor(S_i / 2) + 1: near-square levels per dimension."""
    return tuple(int(s) // 2 + 1 for s in tensor_shape)


def build_multilevel_hankel(values: np.ndarray, window: Sequence[int]) -> np.ndarray:
    """Nested Hankel-of-Hankel matrix of a d-dimensional sequence.

    Row multi-index l and column multi-index j (both lexicographic, last
    coordinate fastest) address entry Q[l + j].
    """
    values = np.asarray(values)
    structure = HankelStructure(values.shape, tuple(window))
    # sliding_window_view yields W[j, l] = Q[j + l]; reorder to rows=l, cols=j.
    w = sliding_window_view(values, structure.window)
    d = values.ndim
    w = w.transpose(*range(d, 2 * d), *range(d))
    return w.reshape(structure.matrix_shape)


def tensor_from_hankel(H: np.ndarray, structure: HankelStructure) -> np.ndarray:
    """Average Hankel entries over constant-(l + j) orbits back into a tensor."""
    idx = structure.orbit_index().ravel()
    size = int(np.prod(structure.tensor_shape))
    counts = np.bincount(idx, minlength=size)
    flat = H.ravel()
    re = np.bincount(idx, weights=flat.real, minlength=size)
    im = np.bincount(idx, weights=flat.imag, minlength=size)
    return ((re + 1j * im) / counts).reshape(structure.tensor_shape)


def _shift_masks(window: tuple, axis: int):
    L = window
    l_idx = np.stack(np.unravel_index(np.arange(np.prod(L)), L))
    under = l_idx[axis] < L[axis] - 1
    over = l_idx[axis] > 0
    return under, over


def nd_esprit(
    Q: MeasurementTensor,
    M: int,
    window: Optional[Sequence[int]] = None,
    seed: int = 0,
) -> HarmonicEstimate:
    """Joint recovery of M frequency tuples and amplitudes from Q.

    The subspace pencils of every dimension are diagonalised by the
    eigenvectors of one random linear combination, which pairs the per
    dimension frequencies source by source.
    """
    values = np.asarray(Q.values, dtype=complex)
    shape = values.shape
    d = values.ndim
    if M < 1:
        raise OrderTooLarge("model order must be at least 1")
    if window is None:
        window = default_window(shape)
    structure = HankelStructure(shape, tuple(window))
    L, J = structure.window, structure.complement
    n_rows, n_cols = structure.matrix_shape
    if n_rows < M or n_cols < M:
        raise OrderTooLarge(
            f"Hankel {n_rows}x{n_cols} cannot carry model order {M}"
        )
    for i in range(d):
        if L[i] < 2:
            raise OrderTooLarge(f"dimension {i} needs at least two window rows")
        if (L[i] - 1) * n_rows // L[i] < M:
            raise OrderTooLarge(f"shift-invariance pencil in dimension {i} is rank deficient")

    H = build_multilevel_hankel(values, structure.window)
    u, sv, _ = np.linalg.svd(H, full_matrices=False)
    U = u[:, :M]

    pencils = []
    for i in range(d):
        under, over = _shift_masks(structure.window, i)
        F, *_ = np.linalg.lstsq(U[under], U[over], rcond=None)
        pencils.append(F)

    rng = np.random.default_rng(seed)
    T = None
    for _ in range(MAX_BETA_RETRIES):
        beta = rng.normal(size=d)
        beta /= np.linalg.norm(beta)
        Kmat = sum(b * F for b, F in zip(beta, pencils))
        _, vecs = np.linalg.eig(Kmat)
        if np.linalg.cond(vecs) < EIG_COND_CEILING:
            T = vecs
            break
    if T is None:
        raise DefectiveEigensystem(
            f"no well-conditioned eigenbasis after {MAX_BETA_RETRIES} draws"
        )

    freqs = np.empty((M, d), dtype=complex)
    for i in range(d):
        D = np.linalg.solve(T, pencils[i] @ T)
        freqs[:, i] = np.diag(D)

    amps, cond = _amplitude_fit(values, freqs, Q.k_min)
    return HarmonicEstimate(
        model_order=M,
        amplitudes=amps,
        frequencies=freqs,
        singular_values=sv,
        vandermonde_condition=cond,
    )


def _vandermonde(shape, k_min, freqs):
    M = freqs.shape[0]
    cols = np.ones((1, M), dtype=complex)
    for i, s in enumerate(shape):
        powers = np.arange(k_min[i], k_min[i] + s)
        block = freqs[None, :, i] ** powers[:, None]  # (s, M)
        cols = (cols[:, None, :] * block[None, :, :]).reshape(-1, M)
    return cols


def _amplitude_fit(values, freqs, k_min):
    M = freqs.shape[0]
    for a in range(M):
        for b in range(a + 1, M):
            if np.all(freqs[a] == freqs[b]):
                raise IllConditionedVandermonde(
                    f"sources {a} and {b} share an identical frequency tuple"
                )
    A = _vandermonde(values.shape, k_min, freqs)
    sv = np.linalg.svd(A, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    amps, *_ = np.linalg.lstsq(A, values.reshape(-1), rcond=None)
    return amps, cond


def amplitude_ls(Q: MeasurementTensor, frequencies: np.ndarray) -> np.ndarray:
    """Least-squares amplitudes for known frequency tuples (rows of ``frequencies``)."""
    freqs = np.atleast_2d(np.asarray(frequencies, dtype=complex))
    values = np.asarray(Q.values, dtype=complex)
    if freqs.shape[1] != values.ndim:
        raise ShapeError("frequency tuples do not match the tensor rank")
    amps, _ = _amplitude_fit(values, freqs, Q.k_min)
    return amps


def denoise_cadzow(
    H: np.ndarray,
    M: int,
    structure: HankelStructure,
    max_iter: int = 10,
    gap_tol: float = 1e-10,
) -> np.ndarray:
    """Alternate rank-M truncation with multilevel-Hankel structure restoration.

    Stops when the Frobenius gap between the truncated and re-structured
    iterates drops below ``gap_tol`` (relative), or after ``max_iter`` rounds.
    Returns a structured (exactly multilevel-Hankel) matrix.
    """
    H = np.asarray(H, dtype=complex)
    if H.shape != structure.matrix_shape:
        raise ShapeError("matrix does not match the declared structure")
    idx = structure.orbit_index()
    current = H
    scale = np.linalg.norm(H)
    if scale == 0:
        return H.copy()
    for _ in range(max_iter):
        u, s, vh = np.linalg.svd(current, full_matrices=False)
        rank = min(M, s.size)
        truncated = (u[:, :rank] * s[:rank]) @ vh[:rank]
        tensor = tensor_from_hankel(truncated, structure)
        structured = tensor.ravel()[idx.ravel()].reshape(structure.matrix_shape)
        gap = np.linalg.norm(structured - truncated)
        current = structured
        if gap < gap_tol * scale:
            break
    return current


def denoise_tensor(
    Q: MeasurementTensor,
    M: int,
    window: Optional[Sequence[int]] = None,
    entry_std: Optional[np.ndarray] = None,
    max_iter: int = 10,
) -> MeasurementTensor:
    """Cadzow-denoise a measurement tensor, optionally prewhitened.

    ``entry_std`` holds the per-entry noise standard deviation implied by the
    weight tensor; dividing by it approximates full covariance whitening with
    its diagonal, which is exact only for uncorrelated entries.
    """
    values = np.asarray(Q.values, dtype=complex)
    if window is None:
        window = default_window(values.shape)
    structure = HankelStructure(values.shape, tuple(window))
    work = values
    std = None
    if entry_std is not None:
        std = np.asarray(entry_std, dtype=float)
        if std.shape != values.shape:
            raise ShapeError("entry_std must match the tensor shape")
        if np.any(std <= 0):
            std = None
        else:
            work = values / std
    H = build_multilevel_hankel(work, structure.window)
    cleaned = denoise_cadzow(H, M, structure, max_iter=max_iter)
    out = tensor_from_hankel(cleaned, structure)
    if std is not None:
        out = out * std
    return MeasurementTensor(out, r=Q.r, T=Q.T, k_min=Q.k_min)
