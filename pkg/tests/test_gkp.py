import numpy as np
import pytest

from bpplus import gkp, linalg

# frozen from a direct inner product at Delta=0.36, d=196
OVERLAP_036_D196 = 0.0045125


@pytest.fixture(scope="module")
def paper_params():
    return gkp.GkpParams(delta=0.36, dim=196)


@pytest.fixture(scope="module")
def paper_states(paper_params):
    return (
        gkp.analytic_code_state(0, paper_params),
        gkp.analytic_code_state(1, paper_params),
    )


def test_states_unit_norm(paper_states):
    for s in paper_states:
        assert abs(np.linalg.norm(s) - 1.0) < 1e-12


def test_code_state_overlap_regression(paper_states):
    s0, s1 = paper_states
    assert abs(np.vdot(s0, s1)) == pytest.approx(OVERLAP_036_D196, abs=2e-6)


def test_stabilizer_expectation_near_unity(paper_params, paper_states):
    # simultaneous +1 eigenvectors of both finite-energy stabilizers
    sq = gkp.finite_energy_stabilizer("q", paper_params)
    sp = gkp.finite_energy_stabilizer("p", paper_params)
    for state in paper_states:
        assert abs(np.vdot(state, sq @ state) - 1.0) < 1e-4
        assert abs(np.vdot(state, sp @ state) - 1.0) < 1e-4


def test_stabilizer_eigenvector_residual(paper_params, paper_states):
    sq = gkp.finite_energy_stabilizer("q", paper_params)
    for state in paper_states:
        assert np.linalg.norm(sq @ state - state) < 1e-3


def test_stabilizer_small_delta_limit():
    # as Delta -> 0 the envelope becomes the identity and the finite-energy
    # stabilizer reduces to the ideal displacement (computed at the same
    # internal cutoff, since truncation conventions differ at the edge)
    params = gkp.GkpParams(delta=1e-6, dim=64)
    for quad in ("q", "p"):
        stab = gkp.finite_energy_stabilizer(quad, params)
        ideal_internal = linalg.displacement(
            1j * params.lattice if quad == "q" else params.lattice, 96
        )[:64, :64]
        assert np.abs(stab - ideal_internal).max() < 1e-8
        # and acts unitarily well inside the truncation (columns whose
        # displaced support stays below the cutoff keep unit norm)
        col_norms = np.linalg.norm(stab[:, :16], axis=0)
        assert np.abs(col_norms - 1).max() < 1e-10


def test_stabilizer_alternative_route_oracle():
    # independent construction from the eigendecomposition of n
    params = gkp.GkpParams(delta=0.4, dim=48)
    d_int = 72
    disp = linalg.displacement(1j * params.lattice, d_int)
    evals = np.arange(d_int)
    left = np.diag(np.exp(-params.delta**2 * evals))
    right = np.diag(np.exp(params.delta**2 * evals))
    expected = (left @ disp @ right)[:48, :48]
    got = gkp.finite_energy_stabilizer("q", params)
    assert np.abs(got - expected).max() < 1e-10


@pytest.mark.parametrize("gauge", gkp.ALL_GAUGES)
def test_gauged_states_have_stated_eigenvalues(gauge):
    params = gkp.GkpParams(delta=0.36, dim=196, gauge=gauge)
    state = gkp.analytic_code_state(0, params)
    sq = gkp.finite_energy_stabilizer("q", params)
    sp = gkp.finite_energy_stabilizer("p", params)
    assert np.vdot(state, sq @ state) == pytest.approx((-1) ** gauge[0], abs=1e-3)
    assert np.vdot(state, sp @ state) == pytest.approx((-1) ** gauge[1], abs=1e-3)


def test_cutoff_too_small_raises():
    with pytest.raises(ValueError, match="cutoff"):
        gkp.analytic_code_state(0, gkp.GkpParams(delta=0.36, dim=24))


def test_norm_loss_tolerance_override():
    params = gkp.GkpParams(delta=0.36, dim=60)
    state = gkp.analytic_code_state(0, params, norm_loss_tol=1e-6)
    assert abs(np.linalg.norm(state) - 1.0) < 1e-12


def test_param_validation():
    with pytest.raises(ValueError):
        gkp.GkpParams(delta=-0.1, dim=32)
    with pytest.raises(ValueError):
        gkp.GkpParams(delta=0.3, dim=33)
    with pytest.raises(ValueError):
        gkp.NoiseParams(t1_mode=-1.0)
    with pytest.raises(ValueError):
        gkp.NoiseParams(t_ecd=float("inf"))


def test_noise_scaling():
    base = gkp.NoiseParams()
    scaled = base.scaled_rates(3.0)
    assert scaled.t1_mode == pytest.approx(base.t1_mode / 3)
    assert scaled.t_ecd == base.t_ecd
    assert gkp.NoiseParams.noiseless().is_noiseless


def test_hermite_functions_orthonormal():
    # quadrature integral of psi_m psi_n approximates delta_mn
    x = np.linspace(-12, 12, 4001)
    psi = gkp.hermite_functions(6, x)
    overlap = psi @ psi.T * (x[1] - x[0])
    assert np.abs(overlap - np.eye(6)).max() < 1e-6
