"""Exact quantum spectra of the u(3) boson Hamiltonian at fixed N.

The Hamiltonian is

    H = (1 - xi) C1 - xi / (N + 1) C2 - eps D

with ``C1 = n1 + n2``, ``C2 = L10^2 + L12^2 + L20^2`` built from the Hermitian
bilinears ``L_kl = i (B_k^+ B_l - B_l^+ B_k)`` and the dipole ``D = L20``.
Its matrix in the Fock basis is complex Hermitian; the diagonal phase change
``|n> -> i^{n0} |n>`` makes it real symmetric, which is the route used for
large N.  The parity of ``n1`` is conserved for every parameter value, so
full spectra are computed in two decoupled blocks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .u3 import U3Params

MAX_N = 300


@dataclass(frozen=True)
class FockBasis:
    N: int
    states: np.ndarray  # (dim, 3) occupations (n0, n1, n2)

    @property
    def dim(self) -> int:
        return len(self.states)

    def index(self, n1: int, n2: int) -> int:
        # position of (n1, n2) in lexicographic order
        N = self.N
        return n1 * (N + 1) - n1 * (n1 - 1) // 2 + n2


def build_basis(N: int) -> FockBasis:
    if N < 0:
        raise ValueError("N must be non-negative")
    states = [(N - n1 - n2, n1, n2) for n1 in range(N + 1) for n2 in range(N - n1 + 1)]
    return FockBasis(N, np.array(states, dtype=np.int64).reshape(-1, 3))


def bilinear(basis: FockBasis, k: int, l: int) -> sp.csr_matrix:
    """Matrix of ``B_k^+ B_l`` in the Fock basis."""
    st = basis.states
    if k == l:
        return sp.diags(st[:, k].astype(float)).tocsr()
    valid = st[:, l] > 0
    src = np.flatnonzero(valid)
    tgt_states = st[src].copy()
    amp = np.sqrt((tgt_states[:, k] + 1.0) * tgt_states[:, l])
    tgt_states[:, k] += 1
    tgt_states[:, l] -= 1
    rows = np.array([basis.index(a, b) for a, b in tgt_states[:, 1:]], dtype=np.int64)
    return sp.csr_matrix((amp, (rows, src)), shape=(basis.dim, basis.dim))


def angular_operator(basis: FockBasis, k: int, l: int) -> sp.csr_matrix:
    """Hermitian ``i (B_k^+ B_l - B_l^+ B_k)``."""
    A = bilinear(basis, k, l)
    return (1j * (A - A.T)).tocsr()


def build_hamiltonian(params: U3Params, basis: FockBasis, real: bool = False):
    """Sparse Hamiltonian matrix (not divided by N).

    With ``real=True`` the phase-rotated real symmetric form is returned.
    """
    N = basis.N
    C1 = bilinear(basis, 1, 1) + bilinear(basis, 2, 2)
    C2 = sum(L @ L for L in (angular_operator(basis, 1, 0), angular_operator(basis, 1, 2), angular_operator(basis, 2, 0)))
    D = angular_operator(basis, 2, 0)
    H = ((1 - params.xi) * C1 - params.xi / (N + 1) * C2 - params.eps * D).tocsr()
    if not real:
        return H
    return _to_real(H, basis)


def _to_real(H, basis: FockBasis):
    phase = 1j ** (basis.states[:, 0] % 4)
    U = sp.diags(phase)
    Hr = (U.conj() @ H @ U).tocsr()
    if Hr.nnz and np.abs(Hr.data.imag).max() > 1e-12 * max(1.0, np.abs(Hr.data).max()):
        raise ValueError("phase rotation did not produce a real matrix")
    return sp.csr_matrix(Hr.real)


def l_operator(basis: FockBasis) -> sp.csr_matrix:
    """Two-dimensional angular momentum ``i (B_2^+ B_1 - B_1^+ B_2)``."""
    return angular_operator(basis, 2, 1)


def l2_operator(basis: FockBasis) -> sp.csr_matrix:
    L = l_operator(basis)
    return sp.csr_matrix((L @ L).real)


def diagonalize(matrix, N: int) -> np.ndarray:
    """All eigenvalues of a Hermitian matrix, ascending, divided by N."""
    M = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, np.abs(M).max())
    if np.abs(M - M.conj().T).max() > 1e-12 * scale:
        raise ValueError("matrix is not Hermitian")
    eig = np.linalg.eigvalsh(M)
    return eig / max(N, 1)


def parity_blocks(basis: FockBasis) -> list[np.ndarray]:
    """State indices with even and odd ``n1``."""
    par = basis.states[:, 1] % 2
    return [np.flatnonzero(par == 0), np.flatnonzero(par == 1)]


def spectrum(params: U3Params, N: int) -> np.ndarray:
    """Full spectrum per excitation, using the real form and n1-parity blocks."""
    if N > MAX_N:
        raise ValueError(f"N={N} exceeds the memory cap {MAX_N}")
    basis = build_basis(N)
    H = build_hamiltonian(params, basis, real=True)
    eigs = [diagonalize(H[ix][:, ix], N) for ix in parity_blocks(basis) if ix.size]
    return np.sort(np.concatenate(eigs))


def lowest_eigenvalue(params: U3Params, N: int) -> float:
    """Ground-state energy per excitation from a sparse Lanczos solve."""
    basis = build_basis(N)
    H = build_hamiltonian(params, basis, real=True)
    if basis.dim <= 64:
        return float(diagonalize(H, N)[0])
    v0 = np.ones(basis.dim)  # deterministic start vector
    w = eigsh(H, k=1, which="SA", tol=0.0, v0=v0, return_eigenvectors=False)
    return float(w[0]) / N


@dataclass(frozen=True)
class SpectrumBlock:
    """Levels of one ``l^2`` eigenspace; ``m`` is ``|l|`` and ``label = m / N``."""

    label: float | str
    m: int | None
    eigenvalues: np.ndarray

    @property
    def dimension(self) -> int:
        return len(self.eigenvalues)


def l2_blocks(params: U3Params, basis: FockBasis, rel_tol: float = 1e-8) -> list[SpectrumBlock]:
    """Spectrum split into eigenspaces of ``l^2`` (requires zero field).

    ``l^2`` conserves ``n0``, so it is diagonalised inside each fixed-``n0``
    sector; eigenvectors with equal ``l^2`` (within ``rel_tol``) from all
    sectors span one block, onto which H is projected.
    """
    if params.eps != 0.0:
        raise ValueError("l^2 is conserved only at eps = 0")
    N = basis.N
    L2 = l2_operator(basis)
    H = build_hamiltonian(params, basis, real=True)
    vectors: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}
    for n0 in range(N + 1):
        ix = np.flatnonzero(basis.states[:, 0] == n0)
        w, v = np.linalg.eigh(L2[ix][:, ix].toarray())
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        start = 0
        while start < len(w):
            stop = start + 1
            while stop < len(w) and abs(w[stop] - w[start]) <= rel_tol * max(1.0, abs(w[start])):
                stop += 1
            m = int(round(np.sqrt(max(w[start], 0.0))))
            vectors.setdefault(m, []).append((ix, v[:, start:stop]))
            start = stop
    blocks = []
    for m in sorted(vectors):
        rows, cols, vals = [], [], []
        col = 0
        for ix, vecs in vectors[m]:
            r, c = np.nonzero(np.ones_like(vecs, dtype=bool))
            rows.append(ix[r])
            cols.append(c + col)
            vals.append(vecs[r, c])
            col += vecs.shape[1]
        V = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(basis.dim, col),
        )
        Hm = (V.T @ H @ V).toarray()
        Hm = 0.5 * (Hm + Hm.T)
        blocks.append(SpectrumBlock(m / N if N else 0.0, m, diagonalize(Hm, N)))
    return blocks


def write_spectrum_csv(path, energies, label=None, meta: dict | None = None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "energy_per_N"] + (["l_label"] if label is not None else []))
        for i, e in enumerate(energies):
            row = [i, repr(float(e))]
            if label is not None:
                row.append(repr(float(label)))
            writer.writerow(row)
