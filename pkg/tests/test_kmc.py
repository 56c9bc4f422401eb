import math

import numpy as np
import pytest
from scipy import stats as sps

from latticediff.generator import build_rate_table, escape_rates
from latticediff.kmc import (ParticleState, _Process, run_ensemble,
                             sample_paths, step)
from latticediff.model import DispersionSpec, GridSpec, ModelConfig, SpinSystem
from latticediff.presets import reference_1d
from latticediff.reservoir import BathProfile
from latticediff.spectral import perron_curve


def _single_level_model():
    return ModelConfig(
        dim=1, dispersion=DispersionSpec("nearest_neighbor"),
        spin=SpinSystem(levels=(0.5,), couplings=((0.0,),)),
        beta=1.0, bath=BathProfile("builtin_gaussian", beta=1.0, dim=1),
        grid=GridSpec(points_per_axis=16, sphere_nodes=2),
    )


def test_single_level_is_ballistic():
    cfg = _single_level_model()
    proc = _Process(build_rate_table(cfg))
    rng = np.random.default_rng(0)
    state = ParticleState(x=(0.0,), k=(0.7,), level=0)
    v = 2.0 * math.sin(0.7)
    for n in range(1, 4):
        state = step(state, None, rng, process=proc)
        assert state.level == 0
        assert state.k == (0.7,)
        assert state.x[0] == pytest.approx(v * state.t, rel=1e-12)
    stats = run_ensemble(cfg, 512, 30.0)
    assert np.all(stats.level_hist == [512])


def test_waiting_times_follow_escape_rates(ref1d, ref1d_table):
    rates = escape_rates(ref1d_table)
    proc = _Process(ref1d_table)
    rng = np.random.default_rng(123)
    state = ParticleState(x=(0.0,), k=(0.0,), level=1)
    waits = {0: [], 1: []}
    for _ in range(20000):
        new = step(state, None, rng, process=proc)
        waits[state.level].append(new.t - state.t)
        state = new
    for lvl in (0, 1):
        sample = np.asarray(waits[lvl])
        assert len(sample) >= 5000
        assert sample.mean() == pytest.approx(1.0 / rates[lvl], rel=0.05)
        result = sps.kstest(sample, "expon", args=(0.0, 1.0 / rates[lvl]))
        assert result.pvalue > 0.01


def test_mean_wait_on_unit_rate_profile():
    # psi_hat(1) pinned to 1 puts the upper escape rate at exactly 4 pi
    cfg = ModelConfig(
        dim=1, dispersion=DispersionSpec("nearest_neighbor"),
        spin=SpinSystem(levels=(0.0, 1.0), couplings=((0, 1), (1, 0))),
        beta=1.0,
        bath=BathProfile("tabulated", beta=1.0, dim=1,
                         table_omega=(0.0, 1.0, 2.0),
                         table_values=(0.0, 1.0, 0.0)),
        grid=GridSpec(points_per_axis=16, sphere_nodes=2),
    )
    proc = _Process(build_rate_table(cfg))
    rng = np.random.default_rng(31)
    waits = []
    state = ParticleState(x=(0.0,), k=(0.0,), level=1)
    for _ in range(12000):
        new = step(state, None, rng, process=proc)
        if state.level == 1:
            waits.append(new.t - state.t)
        state = new
    assert np.mean(waits) == pytest.approx(1.0 / (4.0 * math.pi), rel=0.05)


def test_ensemble_stats_invariants(medium_run):
    assert medium_run.level_hist.sum() == medium_run.n_traj
    assert medium_run.k_hist[0].sum() == medium_run.n_traj
    cov = medium_run.cov_x
    assert np.allclose(cov, cov.T)
    assert np.all(np.linalg.eigvalsh(cov) >= 0)
    for est in medium_run.cgf:
        assert abs(est.sample_mean) <= 1.0 + 1e-12


def test_jump_magnitude_equals_level_gap(ref1d, ref1d_table):
    proc = _Process(ref1d_table)
    rng = np.random.default_rng(9)
    state = ParticleState(x=(0.0,), k=(0.0,), level=1)
    for _ in range(50):
        new = step(ParticleState(x=(0.0,), k=(0.0,), level=state.level),
                   None, rng, process=proc)
        assert abs(new.k[0]) == pytest.approx(1.0, abs=1e-14)
        state = new


def test_momentum_wrapped_after_jump(ref1d, ref1d_table):
    proc = _Process(ref1d_table)
    rng = np.random.default_rng(4)
    state = ParticleState(x=(0.0,), k=(3.0,), level=1)
    for _ in range(20):
        state = step(state, None, rng, process=proc)
        assert -math.pi <= state.k[0] < math.pi


@pytest.fixture(scope="module")
def medium_run(ref1d, ref1d_table):
    return run_ensemble(ref1d, 20000, 120.0, probes=[[0.1], [-0.1]],
                        table=ref1d_table)


def test_drift_consistent_with_zero(medium_run):
    for i in range(len(medium_run.mean_x)):
        assert abs(medium_run.mean_x[i]) <= 3.0 * medium_run.mean_x_se[i]


def test_level_occupation_matches_gibbs(medium_run):
    result = sps.chisquare(medium_run.level_hist, medium_run.gibbs_expected)
    assert result.pvalue > 0.01


def test_momentum_marginal_uniform(medium_run):
    assert medium_run.k_marginal_tv(0) < 0.02


def test_diffusion_estimate_matches_spectral(ref1d, ref1d_table, medium_run):
    from latticediff.spectral import diffusion_tensor_formula

    target = diffusion_tensor_formula(ref1d, ref1d_table)[0, 0]
    est = medium_run.diffusion[0, 0]
    se = medium_run.diffusion_se[0, 0]
    assert abs(est - target) <= 4.0 * se  # loose: includes O(1/t) transient


def test_diffusion_stable_under_time_doubling(ref1d, ref1d_table):
    a = run_ensemble(ref1d, 20000, 60.0, table=ref1d_table)
    b = run_ensemble(ref1d, 20000, 120.0, table=ref1d_table)
    combined = math.hypot(a.diffusion_se[0, 0], b.diffusion_se[0, 0])
    assert abs(a.diffusion[0, 0] - b.diffusion[0, 0]) <= 4.0 * combined


def test_cgf_zero_probe_is_exactly_zero(ref1d, ref1d_table):
    stats = run_ensemble(ref1d, 256, 10.0, probes=[[0.0]], table=ref1d_table)
    assert stats.cgf[0].value == 0.0


def test_cgf_opposite_probes_conjugate(medium_run):
    plus, minus = medium_run.cgf
    err = 3.0 * math.hypot(plus.se_real + minus.se_real,
                           plus.se_imag + minus.se_imag)
    assert abs(plus.value - np.conj(minus.value)) <= err


def test_cgf_matches_fiber_eigenvalue(ref1d, ref1d_table, medium_run):
    target = perron_curve(ref1d, ref1d_table, [[0.1]])[0].eigenvalue
    est = medium_run.cgf[0]
    assert abs(est.value.real - target.real) <= 4.0 * est.se_real + 2e-4
    assert abs(est.value.imag - target.imag) <= 4.0 * est.se_imag + 2e-4


def test_reproducible_for_fixed_seed(ref1d, ref1d_table):
    a = run_ensemble(ref1d, 4096, 20.0, probes=[[0.1]], table=ref1d_table)
    b = run_ensemble(ref1d, 4096, 20.0, probes=[[0.1]], table=ref1d_table)
    assert np.array_equal(a.cov_x, b.cov_x)
    assert np.array_equal(a.level_hist, b.level_hist)
    assert a.cgf[0].value == b.cgf[0].value


def test_reproducible_across_thread_counts(ref1d, ref1d_table):
    a = run_ensemble(ref1d, 70000, 8.0, table=ref1d_table, threads=1,
                     block_size=16384)
    b = run_ensemble(ref1d, 70000, 8.0, table=ref1d_table, threads=4,
                     block_size=16384)
    assert np.array_equal(a.cov_x, b.cov_x)
    assert np.array_equal(a.k_hist, b.k_hist)


def test_seed_changes_results(ref1d, ref1d_table):
    other = reference_1d(seed=7)
    a = run_ensemble(ref1d, 2048, 10.0, table=ref1d_table)
    b = run_ensemble(other, 2048, 10.0, table=ref1d_table)
    assert not np.array_equal(a.cov_x, b.cov_x)


def test_warning_when_horizon_too_short(ref1d, ref1d_table):
    stats = run_ensemble(ref1d, 256, 1.0, table=ref1d_table, g_low=0.1)
    assert any("diffusive regime" in w for w in stats.warnings)


def test_sample_paths_structure(ref1d, ref1d_table):
    rows = sample_paths(ref1d, 2, 5.0, table=ref1d_table)
    paths = {r[0] for r in rows}
    assert paths == {0, 1}
    for i, t, x, k, level in rows:
        assert -math.pi <= k[0] < math.pi
        assert level in (0, 1)
