"""Adaptive random-walk Metropolis sampling with convergence diagnostics.

The proposal is a two-component Gaussian mixture centered on the current
state: with probability ``1 - beta`` a step drawn from the scaled
empirical covariance of the chain history (the classic 2.38^2/d adaptive
rule), and with probability ``beta`` a step from a fixed fallback
covariance Q.  Until the history holds more than ``dim + 1`` states the
empirical covariance is not well defined and only the fallback component
is used.  Both components are symmetric, so the Metropolis ratio needs no
proposal correction.

Multiple chains run independently; convergence is judged with the
Brooks-Gelman multivariate potential scale reduction factor (max-root
statistic) over the second halves of the chains, and the retained sample
is every ``thin``-th state of each second half.
"""

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .gridio import read_matrix_csv, write_matrix_csv


class GaussianTarget:
    """Posterior density for a Gaussian latent prior and Gaussian noise.

    log F(m) = -1/2 m^T m / prior_variance
               -1/2 (g(m) - d_obs)^T C_d^{-1} (g(m) - d_obs)
    up to an additive constant.  ``obs_model`` supplies d_obs and C_d.
    """

    def __init__(self, prior_variance, forward, obs_model, dim=None):
        if not prior_variance > 0:
            raise ValueError("prior_variance must be positive")
        self.prior_variance = float(prior_variance)
        self.forward = forward
        self.obs_model = obs_model
        self.dim = dim

    def log_prior(self, m):
        m = np.asarray(m, dtype=float)
        return -0.5 * float(m @ m) / self.prior_variance

    def log_likelihood(self, m):
        r = np.asarray(self.forward(m), dtype=float) - self.obs_model.d_obs
        return -0.5 * float(r @ self.obs_model.cov_solve(r))

    def log_posterior(self, m):
        return self.log_prior(m) + self.log_likelihood(m)


class ProposalState:
    """Adaptive-Metropolis proposal with streaming history statistics.

    The running mean and covariance use Welford's numerically stable
    update and only ever see past chain states (no lookahead).  The state
    survives checkpointing, so adaptation persists across restarts.
    """

    def __init__(self, dim, q_std, beta=0.05, jump_factor=None):
        if not 0 <= beta <= 1:
            raise ValueError("beta must be in [0, 1]")
        self.dim = int(dim)
        self.beta = float(beta)
        self.q_std = np.broadcast_to(np.asarray(q_std, dtype=float), (self.dim,)).copy()
        if np.any(self.q_std <= 0):
            raise ValueError("fallback proposal stds must be positive")
        self.jump_factor = 2.38**2 / self.dim if jump_factor is None else float(jump_factor)
        self.count = 0
        self.mean = np.zeros(self.dim)
        self._m2 = np.zeros((self.dim, self.dim))
        self.fallback_flags = 0
        self._chol = None

    @property
    def covariance(self):
        if self.count < 2:
            raise ValueError("covariance undefined with fewer than 2 states")
        return self._m2 / (self.count - 1)

    @property
    def adapted(self):
        """True once the empirical covariance is well defined."""
        return self.count > self.dim + 1

    def update(self, state):
        delta = state - self.mean
        self.count += 1
        self.mean += delta / self.count
        self._m2 += np.outer(delta, state - self.mean)
        self._chol = None

    def propose(self, current, rng):
        """Draw a candidate; symmetric in (current, candidate)."""
        use_fallback = not self.adapted or rng.uniform() < self.beta
        if not use_fallback:
            if self._chol is None:
                try:
                    self._chol = np.linalg.cholesky(self.jump_factor * self.covariance)
                except np.linalg.LinAlgError:
                    self._chol = False
            if self._chol is False:
                self.fallback_flags += 1
                use_fallback = True
        if use_fallback:
            return current + self.q_std * rng.standard_normal(self.dim)
        return current + self._chol @ rng.standard_normal(self.dim)

    def state_dict(self):
        return {
            "dim": self.dim,
            "beta": self.beta,
            "q_std": self.q_std.tolist(),
            "jump_factor": self.jump_factor,
            "count": self.count,
            "mean": self.mean.tolist(),
            "m2": self._m2.tolist(),
            "fallback_flags": self.fallback_flags,
        }

    @classmethod
    def from_state_dict(cls, data):
        obj = cls(data["dim"], np.array(data["q_std"]), data["beta"], data["jump_factor"])
        obj.count = int(data["count"])
        obj.mean = np.array(data["mean"], dtype=float)
        obj._m2 = np.array(data["m2"], dtype=float)
        obj.fallback_flags = int(data["fallback_flags"])
        return obj


def accept_step(log_f_current, log_f_candidate, rng):
    """Metropolis rule for symmetric proposals: accept w.p. min(1, r).

    Equal log-densities give r = 1 and are always accepted.
    """
    if np.isnan(log_f_candidate):
        raise ValueError("candidate log-density is NaN")
    if log_f_candidate >= log_f_current:
        return True
    return rng.uniform() < np.exp(log_f_candidate - log_f_current)


@dataclass
class ChainRun:
    samples: np.ndarray
    log_densities: np.ndarray
    n_accepted: int
    proposal: ProposalState
    rng: np.random.Generator


def run_chain(target, initial, n_iters, rng, proposal=None, q_std=None, beta=0.05,
              count_initial=True):
    """Advance one Metropolis chain by ``n_iters`` steps.

    Pass ``count_initial=False`` when resuming from a checkpoint so the
    resume point is not double-counted in the adaptation history.
    """
    current = np.array(initial, dtype=float)
    if proposal is None:
        if q_std is None:
            raise ValueError("need either a ProposalState or q_std")
        proposal = ProposalState(current.size, q_std, beta=beta)
    log_f = target.log_posterior(current)
    if np.isnan(log_f):
        raise ValueError("initial state has NaN log-density")
    if count_initial:
        proposal.update(current)

    samples = np.empty((n_iters, current.size))
    log_densities = np.empty(n_iters)
    n_accepted = 0
    for t in range(n_iters):
        candidate = proposal.propose(current, rng)
        log_f_cand = target.log_posterior(candidate)
        if accept_step(log_f, log_f_cand, rng):
            current, log_f = candidate, log_f_cand
            n_accepted += 1
        samples[t] = current
        log_densities[t] = log_f
        proposal.update(current)
    return ChainRun(samples, log_densities, n_accepted, proposal, rng)


def warm_start(members, n_chains, q_std, beta=0.05, inflation=2.0, anchor=25):
    """Chain initials and pre-seeded proposals built from a posterior ensemble.

    Cold chains started from the prior take a long time to locate a
    concentrated posterior and to adapt their proposal covariance to it.
    When an ensemble-smoother posterior is available, its members are a
    cheap sketch of that covariance: each chain starts at a distinct
    member, and every proposal's streaming statistics are pre-fed with the
    members (each counted ``anchor`` times, spread inflated ``inflation``-fold
    about the ensemble mean).  The proposal family itself is unchanged --
    the seeding only sets the initial adaptation history, which later chain
    states progressively wash out.

    Parameters
    ----------
    members : ndarray, shape (dim, n_members)
        Posterior ensemble, one member per column.
    n_chains : int
        Must not exceed the number of members.
    q_std : array_like
        Fallback proposal std for the mixture component.
    inflation : float
        Spread factor about the ensemble mean; > 1 starts deliberately
        overdispersed.
    anchor : int
        Multiplicity of each member in the seeded history; larger values
        make the seed persist longer against new chain states.

    Returns
    -------
    (initial, proposals)
        ``initial`` has shape (n_chains, dim); ``proposals`` is a list of
        independent :class:`ProposalState`, one per chain.
    """
    members = np.asarray(members, dtype=float)
    if members.ndim != 2:
        raise ValueError("members must be a (dim, n_members) array")
    dim, n_members = members.shape
    if n_chains > n_members:
        raise ValueError("more chains than ensemble members")
    if anchor < 1 or inflation <= 0:
        raise ValueError("anchor must be >= 1 and inflation positive")
    center = members.mean(axis=1)
    seed_states = center[:, None] + inflation * (members - center[:, None])
    template = ProposalState(dim, q_std, beta=beta)
    for _ in range(anchor):
        for j in range(n_members):
            template.update(seed_states[:, j])
    proposals = [ProposalState.from_state_dict(template.state_dict())
                 for _ in range(n_chains)]
    return members[:, :n_chains].T.copy(), proposals


def psrf(chains, window=0.5):
    """Brooks-Gelman multivariate potential scale reduction factor.

    Uses the trailing ``window`` fraction of each chain and returns the
    max-root statistic

        (n - 1)/n + (m + 1)/m * lambda_max(W^{-1} B/n)

    where W is the mean within-chain covariance and B/n the between-chain
    covariance of the chain means.  Values near 1 indicate the chains are
    sampling the same distribution.

    Parameters
    ----------
    chains : ndarray, shape (m, n, dim)
        At least two chains of equal length.
    window : float
        Trailing fraction of each chain to analyze (default: second half).
    """
    arr = np.asarray(chains, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[0] < 2:
        raise ValueError("need a (m >= 2, n, dim) array of chains")
    if not 0 < window <= 1:
        raise ValueError("window must be in (0, 1]")
    m, n_total, dim = arr.shape
    n = int(round(n_total * window))
    if n < 2:
        raise ValueError("window too short to estimate covariances")
    tail = arr[:, n_total - n:, :]

    means = tail.mean(axis=1)
    within = np.zeros((dim, dim))
    for j in range(m):
        within += np.cov(tail[j].T, ddof=1).reshape(dim, dim)
    within /= m
    between_over_n = np.cov(means.T, ddof=1).reshape(dim, dim)

    try:
        chol = sla.cholesky(within, lower=True)
    except sla.LinAlgError:
        raise ValueError("within-chain covariance is singular; chains degenerate") from None
    half = sla.solve_triangular(chol, between_over_n, lower=True)
    sym = sla.solve_triangular(chol, half.T, lower=True)
    lam_max = float(sla.eigvalsh(0.5 * (sym + sym.T)).max())
    return (n - 1.0) / n + (m + 1.0) / m * lam_max


def retained_count(n_iters, thin):
    """Number of samples one chain retains: second half, every thin-th."""
    if n_iters < 2 or thin < 1:
        raise ValueError("need n_iters >= 2 and thin >= 1")
    second_half = n_iters - n_iters // 2
    return -(-second_half // thin)


@dataclass
class McmcResult:
    chains: np.ndarray
    retained: np.ndarray
    acceptance_rates: np.ndarray
    psrf_trace: list
    final_psrf: float
    proposals: list = field(repr=False, default_factory=list)


def run_mcmc(target, n_chains, n_iters, thin, seed=None, initial=None,
             q_std=None, beta=0.05, proposals=None, map_fn=map, psrf_points=10):
    """Run independent adaptive chains and pool their thinned second halves.

    Parameters
    ----------
    target : object with ``log_posterior``
        For a :class:`GaussianTarget`, chain starts default to prior draws.
    n_chains, n_iters, thin : int
        Protocol: ``n_chains`` chains of ``n_iters`` steps; the retained
        sample concatenates every ``thin``-th state of each second half.
    seed : int, optional
        Seeds are spawned per chain, so chains are independent streams and
        the run is reproducible regardless of scheduling.
    initial : ndarray (n_chains, dim), optional
        Explicit start points; defaults to prior draws for Gaussian targets.
    q_std : array_like, optional
        Fallback proposal std; defaults to the prior std for Gaussian targets.
    proposals : list of ProposalState, optional
        One per chain, e.g. from :func:`warm_start`; overrides ``q_std``.
    map_fn : callable, optional
        Chains are independent; a parallel ``map`` can be dropped in.

    Returns
    -------
    McmcResult
        ``retained`` has shape (n_chains * retained_count(n_iters, thin), dim).
    """
    if n_chains < 2:
        raise ValueError("need at least 2 chains for convergence diagnostics")
    if proposals is not None and len(proposals) != n_chains:
        raise ValueError("need one ProposalState per chain")
    seeds = np.random.SeedSequence(seed).spawn(n_chains + 1)
    init_rng = np.random.default_rng(seeds[-1])

    if q_std is None and proposals is None:
        if not hasattr(target, "prior_variance"):
            raise ValueError("q_std is required for targets without prior_variance")
        q_std = np.sqrt(target.prior_variance)
    if initial is None:
        if not hasattr(target, "prior_variance"):
            raise ValueError("initial states are required for this target")
        dim = _target_dim(target)
        initial = init_rng.normal(0.0, np.sqrt(target.prior_variance), (n_chains, dim))
    initial = np.asarray(initial, dtype=float)

    def _one(args):
        start, seed_seq, proposal = args
        return run_chain(target, start, n_iters, np.random.default_rng(seed_seq),
                         proposal=proposal, q_std=q_std, beta=beta)

    chain_proposals = proposals if proposals is not None else [None] * n_chains
    runs = list(map_fn(_one, list(zip(initial, seeds[:n_chains], chain_proposals))))
    chains = np.stack([r.samples for r in runs])
    acceptance = np.array([r.n_accepted / n_iters for r in runs])

    trace = []
    for frac in np.linspace(0.2, 1.0, psrf_points):
        upto = max(4, int(round(n_iters * frac)))
        try:
            value = psrf(chains[:, :upto, :])
        except ValueError:
            # Too few samples in the window for a full-rank covariance;
            # the diagnostic is undefined this early in the run.
            value = None
        trace.append({"iteration": upto, "psrf": value})
    final = trace[-1]["psrf"]

    half = n_iters // 2
    retained = np.concatenate([c[half:][::thin] for c in chains])
    return McmcResult(
        chains=chains,
        retained=retained,
        acceptance_rates=acceptance,
        psrf_trace=trace,
        final_psrf=final,
        proposals=[r.proposal for r in runs],
    )


def _target_dim(target):
    if getattr(target, "dim", None) is not None:
        return target.dim
    raise ValueError("cannot infer dimension; pass explicit initial states")


def save_chain_checkpoint(directory, chain_id, run):
    """Persist one chain (samples CSV + JSON state) for later resumption."""
    import pathlib

    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(directory / f"chain{chain_id:02d}_samples.csv", run.samples)
    state = {
        "n_accepted": int(run.n_accepted),
        "log_density": float(run.log_densities[-1]),
        "proposal": run.proposal.state_dict(),
        "rng_state": run.rng.bit_generator.state,
    }
    with open(directory / f"chain{chain_id:02d}_state.json", "w") as fh:
        json.dump(state, fh, sort_keys=True)


def load_chain_checkpoint(directory, chain_id):
    """Load a checkpoint; returns (samples, state_dict, proposal, rng)."""
    import pathlib

    directory = pathlib.Path(directory)
    samples = read_matrix_csv(directory / f"chain{chain_id:02d}_samples.csv")
    with open(directory / f"chain{chain_id:02d}_state.json") as fh:
        state = json.load(fh)
    proposal = ProposalState.from_state_dict(state["proposal"])
    rng = np.random.default_rng()
    rng.bit_generator.state = state["rng_state"]
    return samples, state, proposal, rng


def resume_chain(target, directory, chain_id, n_iters):
    """Continue a checkpointed chain as if it had never stopped."""
    samples, state, proposal, rng = load_chain_checkpoint(directory, chain_id)
    run = run_chain(target, samples[-1], n_iters, rng, proposal=proposal,
                    count_initial=False)
    run.n_accepted += state["n_accepted"]
    run.samples = np.vstack([samples, run.samples])
    return run
