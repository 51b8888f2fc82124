import math

import numpy as np
import pytest

from bpplus import dynamics, gkp, linalg

from conftest import random_density

# frozen regression anchor: P(o=1 | no-error state) for sBs_q at Table-1
# noise, Delta=0.6, d=32 (the session test scale)
P_CLICK_NOERR_SMALL = 0.008324


def test_lindblad_identity_without_generators(rng):
    rho = random_density(4, rng)
    out = dynamics.lindblad_propagate(np.zeros((4, 4)), [], 1.0, rho)
    assert np.abs(out - rho).max() < 1e-12


@pytest.mark.parametrize("method", ["expm", "krylov", "rk"])
def test_tls_decay_analytic(method):
    t1 = 100e-6
    c = [dynamics.SIGMA_MINUS / math.sqrt(t1)]
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    t = 2e-6
    out = dynamics.lindblad_propagate(np.zeros((2, 2)), c, t, rho0, method=method)
    assert out[1, 1].real == pytest.approx(math.exp(-t / t1), abs=1e-9)
    assert abs(np.trace(out) - 1) < 1e-12


def test_dephasing_coherence_rate():
    tphi = 1e-3
    c = [math.sqrt(2 / tphi) * np.diag([0.0, 1.0]).astype(complex)]
    plus = np.full((2, 2), 0.5, dtype=complex)
    t = 100e-6
    out = dynamics.lindblad_propagate(np.zeros((2, 2)), c, t, plus)
    assert out[0, 1].real == pytest.approx(0.5 * math.exp(-t / tphi), abs=1e-9)


def test_nonhermitian_hamiltonian_rejected():
    with pytest.raises(ValueError):
        dynamics.lindblad_propagate(np.array([[0, 1], [0, 0]]), [], 1.0, np.eye(2) / 2)


def test_noisy_cd_noiseless_limit(rng):
    d = 16
    beta = 1.1 - 0.6j
    pipe = dynamics.noisy_cd(beta, gkp.NoiseParams.noiseless(), d)
    u = dynamics.cd_unitary(beta, d)
    rho = random_density(2 * d, rng)
    assert np.abs(pipe.apply(rho) - u @ rho @ u.conj().T).max() < 1e-6


def test_noisy_cd_trace_preserving(rng, table_noise):
    d = 8
    pipe = dynamics.noisy_cd(0.9j, table_noise, d)
    rhos = np.stack([random_density(2 * d, rng) for _ in range(20)])
    outs = pipe.apply_batch(rhos)
    traces = np.trace(outs, axis1=1, axis2=2)
    assert np.abs(traces - 1).max() < 1e-9


def test_single_segment_tls_decay(table_noise):
    # un-echoed half segment with only TLS decay active: exact exponential
    noise = gkp.NoiseParams(
        t1_mode=math.inf, tphi_mode=math.inf,
        t1_tls=table_noise.t1_tls, tphi_tls=math.inf,
        t_ecd=table_noise.t_ecd,
    )
    d = 4
    c_ops = dynamics.collapse_ops(noise, d)
    assert len(c_ops) == 1
    h = dynamics.cd_hamiltonian(0.0, noise.t_ecd, d)
    excited = np.zeros(2 * d, dtype=complex)
    excited[1] = 1.0  # |n=0> (x) |1>
    rho = np.outer(excited, excited.conj())
    out = dynamics.lindblad_propagate(h, c_ops, noise.t_ecd, rho)
    pop = sum(out[2 * n + 1, 2 * n + 1].real for n in range(d))
    assert pop == pytest.approx(math.exp(-noise.t_ecd / noise.t1_tls), abs=1e-6)


def test_echoed_gate_population_analytic(table_noise):
    # the echo inverts the TLS halfway, so the excited population after the
    # full gate is 1 - (1 - e^{-T/2T1}) e^{-T/2T1}
    noise = gkp.NoiseParams(
        t1_mode=math.inf, tphi_mode=math.inf,
        t1_tls=table_noise.t1_tls, tphi_tls=math.inf,
        t_ecd=table_noise.t_ecd,
    )
    d = 4
    pipe = dynamics.noisy_cd(0.0, noise, d)
    excited = np.zeros(2 * d, dtype=complex)
    excited[1] = 1.0
    out = pipe.apply(np.outer(excited, excited.conj()))
    pop = sum(out[2 * n + 1, 2 * n + 1].real for n in range(d))
    half = math.exp(-noise.t_ecd / (2 * noise.t1_tls))
    assert pop == pytest.approx(1 - (1 - half) * half, abs=1e-9)


def test_trajectory_single_shot_matches_density(rng):
    dim = 4
    mat = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = (mat + mat.conj().T) / 2
    c_ops = [0.6 * linalg.annihilation(dim)]
    psi0 = linalg.ket(dim - 1, dim)
    exact = dynamics.lindblad_propagate(h, c_ops, 1.0, np.outer(psi0, psi0.conj()))
    acc = np.zeros((dim, dim), dtype=complex)
    n_traj = 2000
    for i in range(n_traj):
        psi = dynamics.trajectory_run(h, c_ops, 1.0, psi0, np.random.default_rng(50_000 + i))
        acc += np.outer(psi, psi.conj())
    acc /= n_traj
    # all Pauli-basis expectations within 5 sigma of the statistical error
    err = np.abs(acc - exact).max()
    assert err < 5.0 / math.sqrt(n_traj)


# -- sBs circuit -------------------------------------------------------------


@pytest.mark.parametrize("gauge", gkp.ALL_GAUGES)
@pytest.mark.parametrize("quad", ["q", "p"])
def test_ideal_kraus_completeness_all_gauges(quad, gauge, small_params):
    params = small_params.with_gauge(gauge)
    k0, k1 = dynamics.ideal_sbs_kraus(quad, params)
    total = k0.conj().T @ k0 + k1.conj().T @ k1
    assert np.abs(total - np.eye(small_params.dim)).max() < 1e-9


def test_sbs_logical_action_on_code_states():
    params = gkp.GkpParams(delta=0.36, dim=140)
    mu0 = gkp.analytic_code_state(0, params)
    mu1 = gkp.analytic_code_state(1, params)
    k0q, k1q = dynamics.ideal_sbs_kraus("q", params)
    k0p, k1p = dynamics.ideal_sbs_kraus("p", params)
    # o=1 much less likely than o=0 on code states
    for state in (mu0, mu1):
        assert np.linalg.norm(k1q @ state) ** 2 < 0.01
        assert np.linalg.norm(k1p @ state) ** 2 < 0.01
    # deterministic logical Z for sBs_q, X for sBs_p
    assert np.vdot(mu0, k0q @ mu0) / np.vdot(mu1, k0q @ mu1) == pytest.approx(-1, abs=1e-2)
    assert abs(np.vdot(mu1, k0p @ mu0)) > 0.99
    assert abs(np.vdot(mu0, k0p @ mu1)) > 0.99


def test_noisy_instrument_noiseless_limit(small_params, rng):
    inst = dynamics.noisy_sbs_instrument("q", small_params, gkp.NoiseParams.noiseless())
    k0, k1 = dynamics.ideal_sbs_kraus("q", small_params)
    rho = random_density(small_params.dim, rng)
    branches = inst.apply(rho)
    assert np.abs(branches[0] - k0 @ rho @ k0.conj().T).max() < 1e-6
    assert np.abs(branches[1] - k1 @ rho @ k1.conj().T).max() < 1e-6


def test_noisy_instrument_outcome_probabilities(small_params, table_noise, rng):
    inst = dynamics.noisy_sbs_instrument("p", small_params, table_noise)
    for _ in range(3):
        probs = inst.outcome_probs(random_density(small_params.dim, rng))
        assert probs.min() > -1e-10
        assert abs(probs.sum() - 1) < 1e-8


def test_click_probability_regression(small_params, table_noise, small_mset):
    # full Lindblad run anchor: P(o=1) on the no-error basis state
    inst = dynamics.noisy_sbs_instrument("q", small_params, table_noise)
    ket = small_mset.basis((0, 0)).ket(0, 0)
    p1 = inst.outcome_probs(np.outer(ket, ket.conj()))[1]
    assert p1 == pytest.approx(P_CLICK_NOERR_SMALL, abs=2e-4)


def test_instrument_complete_positivity(table_noise):
    params = gkp.GkpParams(delta=0.8, dim=12)
    inst = dynamics.noisy_sbs_instrument("q", params, table_noise)
    total = sum(inst.superop_matrices())
    d = params.dim
    # Choi matrix of the summed channel (row-major vec convention)
    choi = total.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    evals = np.linalg.eigvalsh((choi + choi.conj().T) / 2)
    assert evals.min() > -1e-8


def test_noisy_converges_to_noiseless(small_params, table_noise, rng):
    faint = gkp.NoiseParams(
        t1_mode=table_noise.t1_mode * 1e6,
        tphi_mode=table_noise.tphi_mode * 1e6,
        t1_tls=table_noise.t1_tls * 1e6,
        tphi_tls=table_noise.tphi_tls * 1e6,
        t_ecd=table_noise.t_ecd,
    )
    inst_faint = dynamics.noisy_sbs_instrument("q", small_params, faint)
    k0, k1 = dynamics.ideal_sbs_kraus("q", small_params)
    rho = random_density(small_params.dim, rng)
    branches = inst_faint.apply(rho)
    assert np.abs(branches[0] - k0 @ rho @ k0.conj().T).max() < 1e-5
    assert np.abs(branches[1] - k1 @ rho @ k1.conj().T).max() < 1e-5


# -- CX gates ----------------------------------------------------------------


@pytest.mark.parametrize(
    "direction,flip",
    [("sd", "q"), ("ds", "p")],
)
def test_cx_gauge_metadata(direction, flip, small_params):
    cx = dynamics.cx_channel(direction, small_params, gkp.NoiseParams.noiseless())
    g_in = cx.gauge_in
    g_out = cx.gauge_out
    if flip == "q":
        assert g_out == (1 - g_in[0], g_in[1])
    else:
        assert g_out == (g_in[0], 1 - g_in[1])


def test_cx_trace_preservation(small_params, table_noise, rng):
    cx = dynamics.cx_channel("ds", small_params, table_noise)
    rho = random_density(2 * small_params.dim, rng)
    out = cx.pipeline.apply(rho)
    assert abs(np.trace(out) - 1) < 1e-9


def _cx_code_block_error(direction, delta, dim, gauge):
    params = gkp.GkpParams(delta=delta, dim=dim, gauge=gauge)
    cx = dynamics.cx_channel(direction, params, gkp.NoiseParams.noiseless())
    u = np.eye(2 * dim, dtype=complex)
    for step in cx.pipeline.steps:
        u = step.u @ u
    basis_states = []
    for which, g in ((0, gauge), (1, gauge)):
        basis_states.append(gkp.analytic_code_state(which, params.with_gauge(g)))
    out_params = params.with_gauge(cx.gauge_out)
    outs = [gkp.analytic_code_state(mu, out_params) for mu in (0, 1)]
    tls = [np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)]
    block = np.zeros((4, 4), dtype=complex)
    for j, (mu, t) in enumerate([(m, tt) for m in (0, 1) for tt in (0, 1)]):
        vin = np.kron(basis_states[mu], tls[t])
        for i, (nu, t2) in enumerate([(m, tt) for m in (0, 1) for tt in (0, 1)]):
            vout = np.kron(outs[nu], tls[t2])
            block[i, j] = np.vdot(vout, u @ vin)
    phase = block.flat[np.argmax(np.abs(block))]
    block = block / (phase / abs(phase))
    ideal = np.abs(cx.ideal_logical)
    return np.abs(np.abs(block) - ideal).max()


def test_cx_logical_action_improves_with_smaller_delta():
    # approximation to the ideal CNOT gets better as Delta decreases
    err_large = _cx_code_block_error("sd", 0.5, 120, (0, 0))
    err_small = _cx_code_block_error("sd", 0.36, 120, (0, 0))
    assert err_small < err_large
    assert err_small < 0.03


@pytest.mark.parametrize("gauge", gkp.ALL_GAUGES)
def test_cx_logical_action_all_gauges(gauge):
    assert _cx_code_block_error("sd", 0.4, 120, gauge) < 0.05
    assert _cx_code_block_error("ds", 0.4, 120, gauge) < 0.05


def test_pipeline_superop_trace_preserving(small_params, table_noise):
    params = gkp.GkpParams(delta=0.8, dim=8)
    pipe = dynamics.noisy_cd(0.4, table_noise, params.dim)
    sup = pipe.superop_matrix()
    d2 = 2 * params.dim
    # trace preservation: vec(I)^T L = vec(I)^T
    vec_id = np.eye(d2).reshape(-1)
    assert np.abs(vec_id @ sup - vec_id).max() < 1e-9
