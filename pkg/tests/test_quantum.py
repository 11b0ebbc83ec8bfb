import csv

import numpy as np
import pytest
import scipy.sparse as sp

from esqpt import quantum as q
from esqpt.u3 import U3Params


@pytest.mark.parametrize("N, dim", [(0, 1), (1, 3), (2, 6), (150, 11476)])
def test_basis_size(N, dim):
    b = q.build_basis(N)
    assert b.dim == dim == (N + 1) * (N + 2) // 2
    assert np.all(b.states.sum(axis=1) == N)


def test_basis_index_is_consistent():
    b = q.build_basis(7)
    for i, (_, n1, n2) in enumerate(b.states):
        assert b.index(n1, n2) == i
    with pytest.raises(ValueError):
        q.build_basis(-1)


def test_n1_spectrum_example():
    np.testing.assert_allclose(q.spectrum(U3Params(0.5, 0.0), 1), [-0.5, 0.0, 0.0], atol=1e-14)


def test_u2_limit_multiplicities():
    N = 12
    e = q.spectrum(U3Params(0.0, 0.0), N)
    values, counts = np.unique(np.round(e * N, 9), return_counts=True)
    np.testing.assert_allclose(values, np.arange(N + 1))
    np.testing.assert_array_equal(counts, np.arange(N + 1) + 1)


@pytest.mark.parametrize("N", [10, 50, 150])
def test_so3_limit_ground_state(N):
    assert q.lowest_eigenvalue(U3Params(1.0, 0.0), N) == pytest.approx(-1.0, abs=1e-12)


def test_hamiltonian_hermitian_and_real_route():
    for N in (3, 8, 12):
        b = q.build_basis(N)
        H = q.build_hamiltonian(U3Params(0.56, 0.3), b)
        assert abs(H - H.conj().T).max() < 1e-13
        full = q.diagonalize(H, N)
        real = q.spectrum(U3Params(0.56, 0.3), N)
        np.testing.assert_allclose(real, full, atol=1e-13)


def test_lowest_eigenvalue_matches_full_spectrum():
    p = U3Params(0.3, 0.2)
    assert q.lowest_eigenvalue(p, 20) == pytest.approx(q.spectrum(p, 20)[0], abs=1e-12)


def test_spectrum_memory_cap():
    with pytest.raises(ValueError):
        q.spectrum(U3Params(0.5), q.MAX_N + 1)


@pytest.mark.parametrize("N", [4, 11, 20])
def test_l2_commutes_at_zero_field(N):
    b = q.build_basis(N)
    H = q.build_hamiltonian(U3Params(0.7, 0.0), b)
    L2 = q.l2_operator(b)
    assert abs(H @ L2 - L2 @ H).max() < 1e-10
    H = q.build_hamiltonian(U3Params(0.7, 0.3), b)
    assert abs(H @ L2 - L2 @ H).max() > 1e-3


def test_block_spectra_partition_full_spectrum():
    N = 14
    p = U3Params(0.6, 0.0)
    blocks = q.l2_blocks(p, q.build_basis(N))
    assert sum(blk.dimension for blk in blocks) == q.build_basis(N).dim
    merged = np.sort(np.concatenate([blk.eigenvalues for blk in blocks]))
    np.testing.assert_allclose(merged, q.spectrum(p, N), atol=1e-12)


def test_n2_block_dimensions():
    blocks = q.l2_blocks(U3Params(0.4, 0.0), q.build_basis(2))
    assert {blk.m: blk.dimension for blk in blocks} == {0: 2, 1: 2, 2: 2}


@pytest.mark.parametrize("xi", [0.0, 0.3, 0.9])
def test_top_block_energy(xi):
    N = 10
    top = q.l2_blocks(U3Params(xi, 0.0), q.build_basis(N))[-1]
    assert top.label == 1.0
    np.testing.assert_allclose(top.eigenvalues, 1 - 2 * xi, atol=1e-12)


def test_blocks_require_zero_field():
    with pytest.raises(ValueError):
        q.l2_blocks(U3Params(0.5, 0.1), q.build_basis(3))


def test_diagonalize_checks_and_scaling():
    np.testing.assert_allclose(q.diagonalize(np.diag([4.0, -2.0, 6.0]), 2), [-1.0, 2.0, 3.0])
    np.testing.assert_allclose(q.diagonalize(sp.diags([1.0, 3.0]), 1), [1.0, 3.0])
    with pytest.raises(ValueError):
        q.diagonalize(np.array([[0.0, 1.0], [0.0, 0.0]]), 1)
    with pytest.raises(ValueError):
        q.diagonalize(np.zeros((2, 3)), 1)


def test_write_spectrum_csv(tmp_path):
    path = tmp_path / "s.csv"
    q.write_spectrum_csv(path, [-0.5, 0.0], label=0.25, meta={"N": 1})
    lines = path.read_text().splitlines()
    assert lines[0] == "# N=1"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["index", "energy_per_N", "l_label"]
    assert [float(r[1]) for r in rows[1:]] == [-0.5, 0.0]
