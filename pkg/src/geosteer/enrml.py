"""Iterative ensemble smoother with Levenberg-Marquardt damping.

The update works entirely through ensemble statistics: parameter and
(scaled) prediction anomalies stand in for the prior covariance and the
forward-model Jacobian, a truncated SVD of the prediction anomalies
defines the data subspace, and a damping factor interpolates between a
Gauss-Newton step (lambda = 0) and no step at all (lambda -> inf).  Each
ensemble member is pulled toward its own perturbed copy of the
observations, so the final ensemble approximates a posterior sample
rather than collapsing onto a single estimate.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


@dataclass
class ObservationModel:
    """Observed data with a block-diagonal noise covariance.

    Parameters
    ----------
    d_obs : ndarray, shape (n_data,)
        Observed (noisy) data.
    blocks : sequence of ndarray
        SPD covariance blocks along the diagonal of C_d; block sizes must
        sum to n_data.  Data across blocks are uncorrelated.
    perturbations : ndarray, shape (n_data, n_members), optional
        Per-member noise realizations drawn from N(0, C_d).  Drawn once
        and held fixed for a whole inversion.
    """

    d_obs: np.ndarray
    blocks: list
    perturbations: np.ndarray | None = None
    _chols: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.d_obs = np.asarray(self.d_obs, dtype=float).ravel()
        self.blocks = [np.asarray(b, dtype=float) for b in self.blocks]
        sizes = []
        for b in self.blocks:
            if b.ndim != 2 or b.shape[0] != b.shape[1]:
                raise ValueError(f"covariance block has shape {b.shape}, expected square")
            if not np.allclose(b, b.T, rtol=0.0, atol=1e-12 * np.abs(b).max()):
                raise ValueError("covariance block is not symmetric")
            sizes.append(b.shape[0])
        if sum(sizes) != self.d_obs.size:
            raise ValueError(
                f"block sizes sum to {sum(sizes)} but d_obs has {self.d_obs.size} entries"
            )
        try:
            self._chols = [sla.cholesky(b, lower=True) for b in self.blocks]
        except sla.LinAlgError as exc:
            raise ValueError(f"covariance block is not positive definite: {exc}") from None
        if self.perturbations is not None:
            self.perturbations = np.asarray(self.perturbations, dtype=float)
            if self.perturbations.shape[0] != self.n_data:
                raise ValueError("perturbations must have one row per datum")

    @property
    def n_data(self):
        return self.d_obs.size

    @property
    def scaling(self):
        """Diagonal of C_d (per-datum noise variances), used as C_sc."""
        return np.concatenate([np.diag(b) for b in self.blocks])

    def _slices(self):
        out, start = [], 0
        for b in self.blocks:
            out.append(slice(start, start + b.shape[0]))
            start += b.shape[0]
        return out

    def whiten(self, x):
        """Scale rows by C_sc^{-1/2} (per-datum inverse noise std)."""
        scale = np.sqrt(self.scaling)
        return x / (scale[:, None] if np.ndim(x) > 1 else scale)

    def cov_solve(self, x):
        """Apply C_d^{-1} to an (n_data, ...) array, block by block."""
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for sl, L in zip(self._slices(), self._chols):
            out[sl] = sla.cho_solve((L, True), x[sl])
        return out

    def misfit(self, residuals):
        """Mean of r_j^T C_d^{-1} r_j over the columns of ``residuals``."""
        r = np.atleast_2d(residuals.T).T
        return float(np.mean(np.sum(r * self.cov_solve(r), axis=0)))

    def draw_perturbations(self, n_members, rng):
        """Draw N(0, C_d) realizations, one column per member."""
        out = np.empty((self.n_data, n_members))
        for sl, L in zip(self._slices(), self._chols):
            out[sl] = L @ rng.standard_normal((L.shape[0], n_members))
        return out


@dataclass(frozen=True)
class Anomalies:
    """Mean-removed, 1/sqrt(N-1)-scaled ensemble anomaly matrices.

    ``dm`` is (n_param, N); ``dd`` and ``de`` are (n_data, N) and are
    additionally row-scaled by C_sc^{-1/2}, so products like dd @ dd.T
    approximate the scaled data covariance directly.
    """

    dm: np.ndarray
    dd: np.ndarray
    de: np.ndarray


@dataclass(frozen=True)
class EnrmlConfig:
    lambda0: float = 1.0
    lambda_down: float = 4.0
    lambda_up: float = 4.0
    conv_tol: float = 0.01
    max_iter: int = 30
    svd_energy: float = 0.99
    localize_threshold: float | None = None

    def __post_init__(self):
        if self.lambda0 < 0:
            raise ValueError("lambda0 must be >= 0")
        if self.lambda_down <= 1 or self.lambda_up <= 1:
            raise ValueError("lambda factors must be > 1")
        if not 0 < self.svd_energy <= 1:
            raise ValueError("svd_energy must be in (0, 1]")


def _center(x):
    return x - x.mean(axis=1, keepdims=True)


def compute_anomalies(members, predictions, obs_model):
    """Build the anomaly matrices for one ensemble.

    Parameters
    ----------
    members : ndarray, shape (n_param, N)
        One ensemble member per column.
    predictions : ndarray, shape (n_data, N)
        Forward responses of the members.
    obs_model : ObservationModel
        Supplies the C_sc scaling and the noise realizations.
    """
    members = np.asarray(members, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    n = members.shape[1]
    if n < 2:
        raise ValueError(f"need at least 2 members, got {n}")
    if predictions.shape != (obs_model.n_data, n):
        raise ValueError(
            f"predictions shape {predictions.shape} does not match "
            f"({obs_model.n_data}, {n})"
        )
    if obs_model.perturbations is None:
        raise ValueError("observation model has no noise perturbations drawn")
    if obs_model.perturbations.shape[1] != n:
        raise ValueError("perturbations were drawn for a different ensemble size")
    root = np.sqrt(n - 1.0)
    dm = _center(members) / root
    dd = obs_model.whiten(_center(predictions)) / root
    de = obs_model.whiten(_center(obs_model.perturbations)) / root
    return Anomalies(dm=dm, dd=dd, de=de)


def truncate_svd(matrix, energy=0.99):
    """Truncated SVD keeping the smallest p with cumulative singular-value
    sum >= ``energy`` of the total.

    Returns ``(u, s, v)`` with ``u`` (rows x p), ``s`` (p,), ``v`` (cols x p).

    >>> u, s, v = truncate_svd(np.diag([10.0, 9.0, 0.1]), energy=0.99)
    >>> s.size
    2
    >>> u2, s2, v2 = truncate_svd(np.diag([10.0, 9.0, 0.1]), energy=1.0)
    >>> s2.size
    3
    """
    matrix = np.asarray(matrix, dtype=float)
    u, s, vt = np.linalg.svd(matrix, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0 or not np.all(np.isfinite(s)):
        raise ValueError("cannot truncate a rank-zero or non-finite matrix")
    # Discard numerically-zero singular values before applying the rule.
    rank = int(np.count_nonzero(s > s[0] * max(matrix.shape) * np.finfo(float).eps))
    s = s[:rank]
    cum = np.cumsum(s)
    p = int(np.searchsorted(cum / cum[-1], energy, side="left")) + 1
    p = min(p, rank)
    return u[:, :p], s[:p], vt[:p].T


def _scaled_residuals(predictions, obs_model):
    return obs_model.whiten(
        predictions - obs_model.d_obs[:, None] - obs_model.perturbations
    )


def _update_map(dd, de, residuals, lam, energy):
    """The (N x N) map taking parameter anomalies to the update.

    Implements -V_p Z [(1+lambda) zeta + I]^{-1} Z^T S_p^{-1} U_p^T r for
    scaled residuals r, where (zeta, Z) is the eigensystem of the noise
    term projected into the truncated data subspace.
    """
    u, s, v = truncate_svd(dd, energy)
    proj_noise = (de.T @ u) / s  # (N, p)
    zeta, z = sla.eigh(proj_noise.T @ proj_noise)
    damped = (1.0 + lam) * zeta + 1.0
    core = (z / damped) @ z.T  # (p, p)
    return -v @ (core @ ((u / s).T @ residuals))


def enrml_update(anomalies, obs_model, predictions, lam, energy=0.99):
    """One damped ensemble update; returns delta_m with a column per member.

    Every column of the result lies in the span of the parameter
    anomalies, and members whose predictions already match their perturbed
    observations receive an exactly zero update.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    residuals = _scaled_residuals(predictions, obs_model)
    gain = _update_map(anomalies.dd, anomalies.de, residuals, lam, energy)
    return anomalies.dm @ gain


def localize(delta_m, anomalies, obs_model, predictions, lam, threshold, energy=0.99):
    """Correlation-screened recomputation of the ensemble update.

    For every (parameter, datum) pair whose ensemble cross-correlation has
    magnitude below ``threshold`` the datum is dropped from that
    parameter's regression; parameters sharing the same retained-data mask
    are updated together.  With ``threshold = 0`` nothing is screened and
    the unlocalized ``delta_m`` is returned unchanged.
    """
    if not 0 <= threshold <= 1:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")

    dm, dd = anomalies.dm, anomalies.dd
    dm_norm = np.linalg.norm(dm, axis=1)
    dd_norm = np.linalg.norm(dd, axis=1)
    denom = np.outer(dm_norm, dd_norm)
    corr = np.zeros((dm.shape[0], dd.shape[0]))
    np.divide(dm @ dd.T, denom, out=corr, where=denom > 0)
    mask = np.abs(corr) >= threshold

    result = np.zeros_like(delta_m)
    residuals = _scaled_residuals(predictions, obs_model)
    patterns, inverse = np.unique(mask, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    for i, pattern in enumerate(patterns):
        rows = inverse == i
        if pattern.all():
            # Nothing screened for these parameters: keep the unlocalized
            # update bit-for-bit.
            result[rows] = delta_m[rows]
        elif pattern.any():
            gain = _update_map(
                anomalies.dd[pattern], anomalies.de[pattern],
                residuals[pattern], lam, energy,
            )
            result[rows] = dm[rows] @ gain
        # else: a parameter uncorrelated with every datum keeps update 0.
    return result


@dataclass
class EnrmlResult:
    members: np.ndarray
    predictions: np.ndarray
    misfit: float
    misfit_history: list
    log: list
    converged: bool
    n_iterations: int
    perturbations: np.ndarray


def run_enrml(members, obs_model, forward, config=None, rng=None, map_fn=map):
    """Levenberg-Marquardt ensemble inversion loop.

    Starting from ``lambda0``, each iteration proposes an update of the
    whole ensemble; if the mean data misfit (against the perturbed
    observations, in the C_d^{-1} norm) decreases, the step is accepted
    and lambda is divided by ``lambda_down``, otherwise the step is
    rejected and lambda is multiplied by ``lambda_up``.  The loop stops
    when an accepted step improves the misfit by less than ``conv_tol``
    relative, or after ``max_iter`` attempts.

    Parameters
    ----------
    members : ndarray, shape (n_param, N)
        Prior ensemble, one member per column.
    obs_model : ObservationModel
        If it carries no perturbations, they are drawn here using ``rng``.
    forward : callable
        Maps one parameter vector (n_param,) to predictions (n_data,).
    config : EnrmlConfig, optional
    rng : numpy.random.Generator, optional
        Needed only to draw perturbations.
    map_fn : callable, optional
        ``map``-compatible; member evaluations are independent, so a
        parallel pool's ``map`` can be dropped in.

    Returns
    -------
    EnrmlResult
    """
    if config is None:
        config = EnrmlConfig()
    members = np.array(members, dtype=float)
    if members.ndim != 2:
        raise ValueError("members must be a 2-D (n_param, N) array")
    n = members.shape[1]

    if obs_model.perturbations is None:
        if rng is None:
            raise ValueError("rng is required to draw noise perturbations")
        obs_model = ObservationModel(
            obs_model.d_obs, obs_model.blocks,
            perturbations=obs_model.draw_perturbations(n, rng),
        )

    def evaluate(ensemble):
        preds = np.column_stack(list(map_fn(forward, list(ensemble.T))))
        if preds.shape != (obs_model.n_data, n):
            raise ValueError(
                f"forward model returned shape {preds.shape}, "
                f"expected ({obs_model.n_data}, {n})"
            )
        bad = np.flatnonzero(~np.all(np.isfinite(preds), axis=0))
        if bad.size:
            raise RuntimeError(
                f"forward model returned non-finite values for members {bad.tolist()}"
            )
        return preds

    predictions = evaluate(members)
    target = obs_model.d_obs[:, None] + obs_model.perturbations
    misfit = obs_model.misfit(predictions - target)

    lam = config.lambda0
    log = [{"iteration": 0, "lambda": lam, "mean_misfit": misfit, "accepted": True}]
    misfit_history = [misfit]
    converged = False
    iteration = 0

    for iteration in range(1, config.max_iter + 1):
        anomalies = compute_anomalies(members, predictions, obs_model)
        delta = enrml_update(anomalies, obs_model, predictions, lam, config.svd_energy)
        if config.localize_threshold is not None:
            delta = localize(
                delta, anomalies, obs_model, predictions, lam,
                config.localize_threshold, config.svd_energy,
            )
        trial_members = members + delta
        trial_predictions = evaluate(trial_members)
        trial_misfit = obs_model.misfit(trial_predictions - target)

        accepted = trial_misfit < misfit
        log.append({
            "iteration": iteration,
            "lambda": lam,
            "mean_misfit": trial_misfit,
            "accepted": bool(accepted),
        })
        if accepted:
            rel_change = (misfit - trial_misfit) / misfit if misfit > 0 else 0.0
            members, predictions, misfit = trial_members, trial_predictions, trial_misfit
            misfit_history.append(misfit)
            lam = lam / config.lambda_down
            if rel_change < config.conv_tol:
                converged = True
                break
        else:
            lam = lam * config.lambda_up

    return EnrmlResult(
        members=members,
        predictions=predictions,
        misfit=misfit,
        misfit_history=misfit_history,
        log=log,
        converged=converged,
        n_iterations=iteration,
        perturbations=obs_model.perturbations,
    )
