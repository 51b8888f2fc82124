import numpy as np
import pytest

from bpplus import dynamics, gkp, linalg, sbs_basis

# At the unit-test scale (Delta=0.6) the basis is less clean than at the
# hardware Delta=0.36 where the acceptance suite freezes 0.99; the first
# derived run here measured ~0.93
LOWERING_MASS_THRESHOLD = 0.9


def test_sector_labels_order():
    labels = sbs_basis.sector_labels(2)
    assert labels == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


@pytest.fixture(scope="module")
def small_basis():
    params = gkp.GkpParams(delta=0.6, dim=32)
    return sbs_basis.build_basis(params, rank=2, seed=11)


def test_orthonormality(small_basis):
    b = small_basis.matrix
    assert np.abs(b.conj().T @ b - np.eye(small_basis.dim)).max() < 1e-9


def test_counts(small_basis):
    # 2 vectors per sector, sector count through rank R is sum (r+1)
    assert small_basis.n_structured == 6
    assert small_basis.matrix.shape[1] == small_basis.dim
    assert small_basis.n_sectors == small_basis.dim // 2


def test_no_error_states_orthonormal(small_basis):
    pair = small_basis.sector_pair(0)
    assert np.abs(pair.conj().T @ pair - np.eye(2)).max() < 1e-12


def test_no_error_fidelity_small_scale():
    params = gkp.GkpParams(delta=0.6, dim=32)
    basis = sbs_basis.build_basis(params, rank=2, seed=11)
    for mu in (0, 1):
        analytic = gkp.analytic_code_state(mu, params)
        fid = abs(np.vdot(analytic, basis.ket(0, mu))) ** 2
        assert fid > 0.95


def test_determinism(small_basis):
    params = gkp.GkpParams(delta=0.6, dim=32)
    again = sbs_basis.build_basis(params, rank=2, seed=11)
    assert np.abs(again.matrix - small_basis.matrix).max() == 0


def test_seed_changes_fill_only(small_basis):
    params = gkp.GkpParams(delta=0.6, dim=32)
    other = sbs_basis.build_basis(params, rank=2, seed=99)
    n_struct = 2 * small_basis.n_structured
    assert np.abs(other.matrix[:, :n_struct] - small_basis.matrix[:, :n_struct]).max() == 0
    assert np.abs(other.matrix[:, n_struct:] - small_basis.matrix[:, n_struct:]).max() > 1e-3


def test_serialization_roundtrip(tmp_path, small_basis):
    path = tmp_path / "b.sbsb"
    small_basis.save(path)
    loaded = sbs_basis.DecomposedBasis.load(path)
    assert np.array_equal(loaded.matrix, small_basis.matrix)
    assert loaded.sectors == small_basis.sectors
    assert loaded.gauge == small_basis.gauge
    assert loaded.seed == small_basis.seed
    assert sbs_basis.basis_hash(loaded) == sbs_basis.basis_hash(small_basis)


def test_bad_magic_rejected(tmp_path, small_basis):
    blob = sbs_basis.serialize_basis(small_basis)
    with pytest.raises(ValueError, match="magic"):
        sbs_basis.deserialize_basis(b"XXXX" + blob[4:])


def test_logical_paulis_anticommute(small_basis):
    px = small_basis.logical_pauli("X")
    pz = small_basis.logical_pauli("Z")
    py = small_basis.logical_pauli("Y")
    assert np.abs(px @ pz + pz @ px).max() < 1e-8
    assert np.abs(px @ px - np.eye(small_basis.dim)).max() < 1e-8
    assert np.abs(px @ pz - (-1j) * py).max() < 1e-8


def test_sector_population_basics(small_basis):
    pops = sbs_basis.sector_population(small_basis.ket(0, 0), small_basis)
    assert pops[0] == pytest.approx(1.0, abs=1e-12)
    assert pops.sum() == pytest.approx(1.0, abs=1e-9)
    mix = (small_basis.ket(0, 0) + small_basis.ket(2, 1)) / np.sqrt(2)
    pops = sbs_basis.sector_population(mix, small_basis)
    assert pops[0] == pytest.approx(0.5, abs=1e-12)
    assert pops[2] == pytest.approx(0.5, abs=1e-12)
    rho = np.outer(mix, mix.conj())
    pops_rho = sbs_basis.sector_population(rho, small_basis)
    assert np.abs(pops_rho - pops).max() < 1e-10


def test_sector_population_dim_mismatch(small_basis):
    with pytest.raises(ValueError):
        sbs_basis.sector_population(np.zeros(7), small_basis)


def test_k1_lowering_structure(small_basis):
    params = gkp.GkpParams(delta=0.6, dim=32)
    _, k1q = dynamics.ideal_sbs_kraus("q", params)
    coeffs = small_basis.to_basis(k1q)
    for label in [(1, 0), (1, 1), (2, 0)]:
        i = small_basis.sector_index(label)
        masses = np.array(
            [
                np.sum(np.abs(coeffs[2 * j : 2 * j + 2, 2 * i : 2 * i + 2]) ** 2)
                for j in range(small_basis.n_sectors)
            ]
        )
        j_low = small_basis.sector_index((label[0] - 1, label[1]))
        # the e_q-lowering block always dominates; at rank 1 it carries
        # nearly all the mass even at this large Delta
        assert masses.argmax() == j_low
        if label[0] + label[1] == 1:
            assert masses[j_low] / masses.sum() > LOWERING_MASS_THRESHOLD


def test_degenerate_spectrum_raises():
    eye = np.eye(8, dtype=complex)
    states = (linalg.ket(0, 8), linalg.ket(1, 8))
    with pytest.raises(sbs_basis.DegenerateSpectrumError):
        sbs_basis.build_no_error_states(eye, eye, states)


def test_rank_too_large_rejected(small_basis):
    params = gkp.GkpParams(delta=0.6, dim=32)
    analytic = (gkp.analytic_code_state(0, params), gkp.analytic_code_state(1, params))
    k0q, k1q = dynamics.ideal_sbs_kraus("q", params)
    k0p, k1p = dynamics.ideal_sbs_kraus("p", params)
    no_err = sbs_basis.build_no_error_states(k0q, k0p, analytic)
    with pytest.raises(ValueError, match="rank"):
        sbs_basis.build_sbs_basis(no_err, k1q, k1p, rank=6, seed=0)
