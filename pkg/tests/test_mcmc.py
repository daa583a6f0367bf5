import numpy as np
import pytest

from geosteer.enrml import ObservationModel
from geosteer.mcmc import (
    GaussianTarget,
    ProposalState,
    accept_step,
    psrf,
    resume_chain,
    retained_count,
    run_chain,
    run_mcmc,
    save_chain_checkpoint,
    warm_start,
)


def _target(dim=3, sigma_d=0.1, prior_var=1.0, seed=0):
    """Identity-forward Gaussian target with a known posterior."""
    rng = np.random.default_rng(seed)
    truth = rng.normal(size=dim)
    d_obs = truth + sigma_d * rng.normal(size=dim)
    model = ObservationModel(d_obs, [sigma_d**2 * np.eye(dim)])
    target = GaussianTarget(prior_var, lambda m: m, model, dim=dim)
    post_var = 1.0 / (1.0 / prior_var + 1.0 / sigma_d**2)
    post_mean = post_var * d_obs / sigma_d**2
    return target, post_mean, post_var * np.eye(dim)


# ---------------------------------------------------------------------------
# target density


def test_log_posterior_matches_dense_oracle():
    rng = np.random.default_rng(1)
    n_data = 5
    block = rng.normal(size=(n_data, n_data))
    block = block @ block.T + n_data * np.eye(n_data)
    d_obs = rng.normal(size=n_data)
    A = rng.normal(size=(n_data, 4))
    model = ObservationModel(d_obs, [block])
    target = GaussianTarget(2.5, lambda m: A @ m, model)
    for _ in range(20):
        m = rng.normal(size=4)
        r = A @ m - d_obs
        oracle = -0.5 * (m @ m) / 2.5 - 0.5 * r @ np.linalg.solve(block, r)
        assert target.log_posterior(m) == pytest.approx(oracle, abs=1e-10)


def test_log_posterior_zero_at_exact_fit():
    model = ObservationModel(np.array([1.0, 2.0]), [np.eye(2)])
    target = GaussianTarget(1.0, lambda m: np.array([1.0, 2.0]), model)
    assert target.log_posterior(np.zeros(3)) == 0.0


def test_doubling_noise_std_quarters_log_likelihood():
    d_obs = np.array([0.5, -1.0])
    m = np.array([2.0, 1.0])
    base = GaussianTarget(1.0, lambda x: x, ObservationModel(d_obs, [np.eye(2)]))
    wide = GaussianTarget(1.0, lambda x: x, ObservationModel(d_obs, [4.0 * np.eye(2)]))
    assert wide.log_likelihood(m) == pytest.approx(base.log_likelihood(m) / 4.0,
                                                   rel=1e-12)


def test_gaussian_target_validation():
    model = ObservationModel(np.zeros(1), [np.eye(1)])
    with pytest.raises(ValueError):
        GaussianTarget(0.0, lambda m: m, model)


# ---------------------------------------------------------------------------
# acceptance rule


def test_accept_always_on_equal_or_better():
    rng = np.random.default_rng(2)
    for _ in range(100):
        assert accept_step(-5.0, -5.0, rng)  # equal -> r = 1
        assert accept_step(-5.0, -4.0, rng)  # better


def test_accept_rate_matches_ratio():
    rng = np.random.default_rng(3)
    diff = np.log(0.25)
    hits = sum(accept_step(0.0, diff, rng) for _ in range(100_000))
    assert hits / 100_000 == pytest.approx(0.25, abs=0.01)


def test_accept_rejects_nan_candidate():
    rng = np.random.default_rng(4)
    with pytest.raises(ValueError):
        accept_step(0.0, np.nan, rng)


# ---------------------------------------------------------------------------
# adaptive proposal


def test_welford_matches_batch_statistics():
    rng = np.random.default_rng(5)
    states = rng.normal(size=(500, 4))
    prop = ProposalState(4, q_std=1.0)
    for x in states:
        prop.update(x)
    np.testing.assert_allclose(prop.mean, states.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(prop.covariance, np.cov(states.T, ddof=1),
                               atol=1e-10)


def test_proposal_validation():
    with pytest.raises(ValueError):
        ProposalState(3, q_std=1.0, beta=1.5)
    with pytest.raises(ValueError):
        ProposalState(3, q_std=0.0)
    with pytest.raises(ValueError):
        ProposalState(2, q_std=1.0).covariance


def test_proposal_pure_fallback_until_well_defined():
    # With history_count <= dim + 1 the empirical covariance is not well
    # defined and every draw must come from the fallback component.
    rng = np.random.default_rng(6)
    dim = 3
    prop = ProposalState(dim, q_std=1e-3, beta=0.0)
    for k in range(dim + 1):
        prop.update(rng.normal(size=dim) * 10.0)
        assert not prop.adapted
    current = np.zeros(dim)
    draws = np.array([prop.propose(current, rng) for _ in range(4000)])
    # Fallback steps have std 1e-3; adapted steps would have std ~10.
    assert np.all(draws.std(axis=0) < 5e-3)
    prop.update(rng.normal(size=dim))
    assert prop.adapted


def test_proposal_mean_is_current_state():
    rng = np.random.default_rng(7)
    prop = ProposalState(3, q_std=0.5, beta=0.05)
    for x in rng.normal(size=(50, 3)):
        prop.update(x)
    current = np.array([10.0, -4.0, 2.5])
    draws = np.array([prop.propose(current, rng) for _ in range(100_000)])
    stderr = draws.std(axis=0) / np.sqrt(len(draws))
    np.testing.assert_array_less(np.abs(draws.mean(axis=0) - current), 3 * stderr)


def test_proposal_covariance_scaling():
    # With beta = 0 and a fixed history, proposal increments draw from
    # (2.38^2 / dim) * empirical covariance.
    rng = np.random.default_rng(8)
    dim = 3
    spread = np.array([[2.0, 0.7, 0.0], [0.7, 1.0, -0.3], [0.0, -0.3, 1.5]])
    chol = np.linalg.cholesky(spread)
    prop = ProposalState(dim, q_std=1.0, beta=0.0)
    history = (chol @ rng.standard_normal((dim, 4000))).T
    for x in history:
        prop.update(x)
    expected = (2.38**2 / dim) * prop.covariance
    draws = np.array([prop.propose(np.zeros(dim), rng) for _ in range(100_000)])
    emp = np.cov(draws.T, ddof=1)
    assert np.linalg.norm(emp - expected) <= 0.1 * np.linalg.norm(expected)


def test_proposal_beta_one_is_plain_random_walk():
    rng = np.random.default_rng(9)
    prop = ProposalState(2, q_std=np.array([0.5, 2.0]), beta=1.0)
    for x in rng.normal(size=(100, 2)) * 50.0:
        prop.update(x)  # adapted, but beta = 1 ignores it
    draws = np.array([prop.propose(np.zeros(2), rng) for _ in range(50_000)])
    np.testing.assert_allclose(draws.std(axis=0), [0.5, 2.0], rtol=0.05)


def test_proposal_singular_covariance_falls_back_and_flags():
    rng = np.random.default_rng(10)
    prop = ProposalState(2, q_std=1e-3, beta=0.0)
    for _ in range(10):  # identical states -> singular covariance
        prop.update(np.array([1.0, 1.0]))
    assert prop.adapted
    draw = prop.propose(np.zeros(2), rng)
    assert prop.fallback_flags == 1
    assert np.all(np.abs(draw) < 0.1)  # fallback scale, not degenerate


def test_proposal_state_dict_round_trip():
    rng = np.random.default_rng(11)
    prop = ProposalState(3, q_std=np.array([1.0, 2.0, 3.0]), beta=0.1)
    for x in rng.normal(size=(20, 3)):
        prop.update(x)
    clone = ProposalState.from_state_dict(prop.state_dict())
    assert clone.count == prop.count
    np.testing.assert_array_equal(clone.mean, prop.mean)
    np.testing.assert_array_equal(clone.covariance, prop.covariance)
    rng_a, rng_b = np.random.default_rng(1), np.random.default_rng(1)
    np.testing.assert_array_equal(
        prop.propose(np.zeros(3), rng_a), clone.propose(np.zeros(3), rng_b)
    )


# ---------------------------------------------------------------------------
# single chain


def test_run_chain_reproducible():
    target, _, _ = _target(seed=12)
    start = np.zeros(3)
    a = run_chain(target, start, 200, np.random.default_rng(0), q_std=0.3)
    b = run_chain(target, start, 200, np.random.default_rng(0), q_std=0.3)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert a.n_accepted == b.n_accepted


def test_run_chain_requires_proposal_or_q_std():
    target, _, _ = _target(seed=13)
    with pytest.raises(ValueError):
        run_chain(target, np.zeros(3), 10, np.random.default_rng(0))


def test_run_chain_rejects_nan_start():
    target, _, _ = _target(seed=14)
    with pytest.raises(ValueError):
        run_chain(target, np.array([np.nan, 0, 0]), 10,
                  np.random.default_rng(0), q_std=0.1)


def test_run_chain_count_initial():
    target, _, _ = _target(seed=15)
    a = run_chain(target, np.zeros(3), 50, np.random.default_rng(0), q_std=0.3)
    assert a.proposal.count == 51  # start + 50 iterations
    b = run_chain(target, np.zeros(3), 50, np.random.default_rng(0), q_std=0.3,
                  count_initial=False)
    assert b.proposal.count == 50


def test_adaptation_uses_only_past_states():
    # The proposal state after t iterations depends only on states up to t:
    # continuing a chain does not change the prefix.
    target, _, _ = _target(seed=16)
    long = run_chain(target, np.zeros(3), 100, np.random.default_rng(5), q_std=0.3)
    short = run_chain(target, np.zeros(3), 60, np.random.default_rng(5), q_std=0.3)
    np.testing.assert_array_equal(long.samples[:60], short.samples)


# ---------------------------------------------------------------------------
# PSRF diagnostic


def test_psrf_iid_chains_near_one():
    rng = np.random.default_rng(17)
    chains = rng.normal(size=(4, 10_000, 3))
    value = psrf(chains)
    assert 0.99 <= value <= 1.05


def test_psrf_duplicated_chain_is_one():
    rng = np.random.default_rng(18)
    chain = rng.normal(size=(10_000, 3))
    value = psrf(np.stack([chain, chain, chain]))
    n = 5000  # second-half window
    assert abs(value - 1.0) <= 2.0 / n


def test_psrf_separated_chains_diverges():
    rng = np.random.default_rng(19)
    base = rng.normal(size=(4, 5000, 1))
    offsets = np.array([-10.0, -10.0, 10.0, 10.0]).reshape(4, 1, 1)
    value = psrf(base + offsets)
    assert value > 1.2 * 100  # between-chain variance dominates utterly


def test_psrf_validation():
    rng = np.random.default_rng(20)
    with pytest.raises(ValueError):
        psrf(rng.normal(size=(1, 100, 2)))  # one chain
    with pytest.raises(ValueError):
        psrf(rng.normal(size=(3, 100, 2)), window=0.0)
    with pytest.raises(ValueError):
        psrf(np.zeros((3, 100, 2)))  # degenerate within-chain covariance


def test_psrf_accepts_two_dim_chains():
    rng = np.random.default_rng(21)
    flat = rng.normal(size=(4, 2000))
    assert psrf(flat) == psrf(flat[:, :, None])


# ---------------------------------------------------------------------------
# retention arithmetic


def test_retained_count_paper_protocol():
    assert 8 * retained_count(1_000_000, 100) == 40_000


def test_retained_count_desk_protocol():
    assert retained_count(20_000, 10) == 1000
    assert 4 * retained_count(20_000, 10) == 4000


def test_retained_count_rounding():
    assert retained_count(5, 2) == 2  # second half has 3 states
    assert retained_count(2, 1) == 1
    assert retained_count(7, 3) == 2
    with pytest.raises(ValueError):
        retained_count(1, 1)
    with pytest.raises(ValueError):
        retained_count(100, 0)


# ---------------------------------------------------------------------------
# multi-chain driver


def test_run_mcmc_shapes_and_determinism():
    target, _, _ = _target(seed=22)
    a = run_mcmc(target, n_chains=2, n_iters=300, thin=10, seed=42, q_std=0.3)
    assert a.chains.shape == (2, 300, 3)
    assert a.retained.shape == (2 * retained_count(300, 10), 3)
    assert a.acceptance_rates.shape == (2,)
    assert np.all((a.acceptance_rates > 0) & (a.acceptance_rates < 1))
    b = run_mcmc(target, n_chains=2, n_iters=300, thin=10, seed=42, q_std=0.3)
    np.testing.assert_array_equal(a.retained, b.retained)


def test_run_mcmc_seed_list_stream():
    target, _, _ = _target(seed=23)
    a = run_mcmc(target, 2, 100, 10, seed=[7, 3], q_std=0.3)
    b = run_mcmc(target, 2, 100, 10, seed=[7, 3], q_std=0.3)
    c = run_mcmc(target, 2, 100, 10, seed=[7, 4], q_std=0.3)
    np.testing.assert_array_equal(a.chains, b.chains)
    assert not np.array_equal(a.chains, c.chains)


def test_run_mcmc_validation():
    target, _, _ = _target(seed=24)
    with pytest.raises(ValueError):
        run_mcmc(target, n_chains=1, n_iters=100, thin=10)
    with pytest.raises(ValueError):
        run_mcmc(target, 2, 100, 10, proposals=[ProposalState(3, 0.1)])


def test_run_mcmc_default_q_std_and_initial_from_prior():
    target, _, _ = _target(seed=25)
    result = run_mcmc(target, 2, 400, 10, seed=0)
    assert result.chains.shape == (2, 400, 3)

    class Opaque:
        def log_posterior(self, m):
            return -0.5 * float(m @ m)

    with pytest.raises(ValueError):
        run_mcmc(Opaque(), 2, 100, 10, seed=0)


def test_run_mcmc_psrf_trace_handles_short_windows():
    target, _, _ = _target(seed=26)
    result = run_mcmc(target, 2, 30, 5, seed=1, q_std=1e-9)
    # Early windows may be rank-deficient; the trace records None there
    # instead of crashing.
    assert all(rec["psrf"] is None or rec["psrf"] > 0 for rec in result.psrf_trace)


def test_run_mcmc_recovers_known_gaussian():
    # Identity-forward Gaussian target: retained moments approach the
    # analytic posterior (tight protocol lives in the acceptance tests).
    target, post_mean, post_cov = _target(dim=3, sigma_d=0.2, seed=27)
    result = run_mcmc(target, 4, 6000, 10, seed=5, q_std=0.2)
    err_mean = np.linalg.norm(result.retained.mean(axis=0) - post_mean)
    assert err_mean <= 0.15 * np.linalg.norm(post_mean)
    emp_cov = np.cov(result.retained.T, ddof=1)
    assert (np.linalg.norm(emp_cov - post_cov)
            <= 0.35 * np.linalg.norm(post_cov))


def test_run_mcmc_custom_map_fn():
    target, _, _ = _target(seed=28)
    calls = []

    def tracking_map(fn, items):
        calls.append(len(items))
        return [fn(it) for it in items]

    run_mcmc(target, 2, 50, 5, seed=2, q_std=0.3, map_fn=tracking_map)
    assert calls == [2]


# ---------------------------------------------------------------------------
# ensemble warm start


def test_warm_start_shapes_and_initials():
    rng = np.random.default_rng(29)
    members = rng.normal(size=(4, 30))
    initial, proposals = warm_start(members, n_chains=3, q_std=0.01)
    assert initial.shape == (3, 4)
    np.testing.assert_array_equal(initial, members[:, :3].T)
    assert len(proposals) == 3
    assert all(p.count == 25 * 30 for p in proposals)


def test_warm_start_covariance_inflation():
    rng = np.random.default_rng(30)
    members = rng.normal(size=(3, 50))
    _, proposals = warm_start(members, 2, q_std=0.01, inflation=2.0, anchor=5)
    seeded = proposals[0].covariance
    np.testing.assert_allclose(seeded, 4.0 * np.cov(members, ddof=0) * (250 / 249),
                               rtol=1e-9)
    # Mean is preserved under inflation about the ensemble mean.
    np.testing.assert_allclose(proposals[0].mean, members.mean(axis=1), atol=1e-12)


def test_warm_start_proposals_are_independent():
    rng = np.random.default_rng(31)
    members = rng.normal(size=(2, 10))
    _, proposals = warm_start(members, 2, q_std=0.01)
    before = proposals[1].covariance.copy()
    proposals[0].update(np.array([100.0, -100.0]))
    np.testing.assert_array_equal(proposals[1].covariance, before)


def test_warm_start_validation():
    members = np.zeros((3, 4))
    with pytest.raises(ValueError):
        warm_start(members, n_chains=5, q_std=0.1)  # more chains than members
    with pytest.raises(ValueError):
        warm_start(np.zeros(3), 2, q_std=0.1)
    with pytest.raises(ValueError):
        warm_start(members, 2, q_std=0.1, anchor=0)
    with pytest.raises(ValueError):
        warm_start(members, 2, q_std=0.1, inflation=0.0)


def test_run_mcmc_accepts_warm_proposals():
    target, _, _ = _target(seed=32)
    rng = np.random.default_rng(33)
    members = rng.normal(size=(3, 20)) * 0.1
    initial, proposals = warm_start(members, 2, q_std=0.05)
    result = run_mcmc(target, 2, 200, 10, seed=3, initial=initial,
                      proposals=proposals)
    assert result.chains.shape == (2, 200, 3)
    # The seeded history persists in the returned proposal states.
    assert all(p.count >= 25 * 20 + 200 for p in result.proposals)


# ---------------------------------------------------------------------------
# checkpointing


def test_checkpoint_resume_bit_identical(tmp_path):
    target, _, _ = _target(seed=34)
    start = np.zeros(3)
    straight = run_chain(target, start, 400, np.random.default_rng(9), q_std=0.3)

    first = run_chain(target, start, 250, np.random.default_rng(9), q_std=0.3)
    save_chain_checkpoint(tmp_path, 0, first)
    resumed = resume_chain(target, tmp_path, 0, 150)

    np.testing.assert_array_equal(resumed.samples, straight.samples)
    assert resumed.n_accepted == straight.n_accepted
    assert resumed.proposal.state_dict() == straight.proposal.state_dict()
