import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import forward_algorithm
from hdmn.exact import exact_filter
from hdmn.joingraph import IBoundWarning, conditioned_width
from hdmn.network import unroll
from hdmn.rbpf import (
    ParticleSet,
    ParticleState,
    bootstrap_filter,
    ijgp_rbpf_filter,
    importance_weight,
    resample,
    select_slice_cutset,
    step_generator,
    systematic_indices,
)
from hdmn.random_models import hmm_parameters, random_dbn, random_hmm, sample_dbn, sample_hmm


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IBoundWarning)
        yield


weights = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=12).filter(lambda w: sum(w) > 1e-6)


@settings(max_examples=100, deadline=None)
@given(weights, st.floats(0.0, 0.999999), st.integers(1, 50))
def test_systematic_counts_are_floor_or_ceil(w, u, n):
    w = np.array(w)
    idx = systematic_indices(w, u, n)
    counts = np.bincount(idx, minlength=len(w))
    expect = n * w / w.sum()
    assert counts.sum() == n
    assert np.all(counts >= np.floor(expect - 1e-9)) and np.all(counts <= np.ceil(expect + 1e-9))
    assert np.all(counts[w == 0] == 0)


def test_systematic_rejects_all_zero():
    with pytest.raises(ValueError):
        systematic_indices(np.zeros(3), 0.5)


def test_resample_resets_weights():
    st_ = [ParticleState((0,), None), ParticleState((1,), None)]
    ps = ParticleSet(st_, np.array([0, 1, 1]), np.log([0.7, 0.2, 0.1]))
    out = resample(ps, 0.1)
    assert out.n == 3 and np.all(out.log_weights == 0)
    assert ps.ess < 3 and out.ess == pytest.approx(3)


def test_step_generator_is_counter_based():
    a = step_generator(5, 3).random(4)
    b = step_generator(5, 3).random(4)
    c = step_generator(5, 4).random(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_importance_weight():
    assert importance_weight(0.0, np.log(0.5), 0.25) == pytest.approx(np.log(2))
    assert importance_weight(0.0, -np.inf, 0.5) == -np.inf
    assert importance_weight(0.0, 0.0, 0.0) == -np.inf


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("w", [0, 1, 2])
def test_slice_cutset_is_discrete_state(seed, w):
    dmn = random_dbn(seed, n_discrete=4, n_continuous=1, n_constraints=2)
    R = select_slice_cutset(dmn, w)
    assert set(R) <= set(dmn.state_ids) and all(dmn.prior.is_discrete(v) for v in R)
    assert select_slice_cutset(dmn, w + 5) == () or len(select_slice_cutset(dmn, w + 5)) <= len(R)


def test_slice_cutset_rejects_negative_w():
    with pytest.raises(ValueError):
        select_slice_cutset(random_hmm(0), -1)


def test_invalid_parameters():
    dmn = random_hmm(0)
    with pytest.raises(ValueError):
        ijgp_rbpf_filter(dmn, [{1: 0}], N=0)
    with pytest.raises(ValueError):
        ijgp_rbpf_filter(dmn, [{1: 0}], i=0)


@pytest.mark.parametrize("seed", range(3))
def test_empty_cutset_is_exact(seed):
    dmn = random_hmm(seed, 3, 3)
    _, es = sample_hmm(dmn, 10, seed)
    out = ijgp_rbpf_filter(dmn, [{1: e} for e in es], w=5, N=7, seed=seed)
    assert out.cutset == ()
    for b, want in zip(out.beliefs, forward_algorithm(*hmm_parameters(dmn), es)):
        np.testing.assert_allclose(b.marginals[0], want, atol=1e-9)


def test_sampled_cutset_converges_on_hmm():
    dmn = random_hmm(2, 2, 2)
    _, es = sample_hmm(dmn, 8, 1)
    out = ijgp_rbpf_filter(dmn, [{1: e} for e in es], w=0, N=3000, seed=4)
    assert out.cutset == (0,)
    for b, want in zip(out.beliefs, forward_algorithm(*hmm_parameters(dmn), es)):
        assert abs(b.marginals[0][1] - want[1]) < 0.05


def test_rbpf_is_deterministic():
    dmn = random_dbn(3, n_discrete=3, n_continuous=1, n_constraints=1)
    obs = [{v: x[v] for v in dmn.state_ids[-1:]} for x in sample_dbn(dmn, 5, 3)]
    a = ijgp_rbpf_filter(dmn, obs, w=0, N=30, seed=11)
    b = ijgp_rbpf_filter(dmn, obs, w=0, N=30, seed=11)
    for x, y in zip(a.beliefs, b.beliefs):
        for v in x.marginals:
            if isinstance(x.marginals[v], np.ndarray):
                assert np.array_equal(x.marginals[v], y.marginals[v])
    assert [m["rejections"] for m in a.metrics] == [m["rejections"] for m in b.metrics]


def test_rbpf_close_to_exact_on_dbn():
    dmn = random_dbn(1, n_discrete=3, n_continuous=1, n_constraints=1)
    obs = [{v: x[v] for v in dmn.state_ids[-1:]} for x in sample_dbn(dmn, 5, 2)]
    ex = exact_filter(dmn, obs)
    out = ijgp_rbpf_filter(dmn, obs, w=0, N=400, seed=0)
    for a, b in zip(out.beliefs, ex):
        for v in range(3):
            assert 0.5 * np.abs(a.marginals[v] - b.marginals[v]).sum() < 0.15
        assert a.info["ess"] > 0


def test_metrics_account_for_draws():
    dmn = random_dbn(5, n_discrete=3, n_continuous=1, n_constraints=2, density=0.4)
    obs = [{v: x[v] for v in dmn.state_ids[-1:]} for x in sample_dbn(dmn, 4, 5)]
    out = ijgp_rbpf_filter(dmn, obs, w=0, N=40, seed=1, proposal="prior")
    for m in out.metrics:
        assert m["draws"] >= 40 and 0 <= m["rejections"] <= m["draws"]
    assert 0.0 <= out.rejection_rate < 1.0


@pytest.mark.parametrize("seed", range(3))
def test_bootstrap_on_hmm(seed):
    dmn = random_hmm(seed, 2, 2)
    _, es = sample_hmm(dmn, 6, seed)
    out = bootstrap_filter(dmn, [{1: e} for e in es], N=4000, seed=seed)
    for b, want in zip(out.beliefs, forward_algorithm(*hmm_parameters(dmn), es)):
        assert abs(b.marginals[0][1] - want[1]) < 0.05


def test_cutset_conditioning_bounds_width():
    dmn = random_dbn(7, n_discrete=4, n_continuous=1, n_constraints=2)
    for w in (0, 1):
        R = select_slice_cutset(dmn, w)
        assert len(R) <= 4
    assert conditioned_width(unroll(dmn, 1), set()) >= 0
