"""
Gradient-based optimization of capture-angle schedules.

The target is the Monte Carlo reconstruction loss

    L = mean_n || A(theta)^+ (A(theta) vec(M_n) + eta_n) - vec(M_n) ||^2

over a training set of Mueller matrices and Gaussian noise draws. The
gradient flows through the design matrix rows (analytic derivatives of
the rotation-conjugated element matrices) and through the truncated
pseudoinverse via the fixed-rank differential

    dA+ = -A+ dA A+ + A+ A+^T dA^T (I - A A+) + (I - A+ A) dA^T A+^T A+

accumulated over the batch in matrix form. Noise enters as explicit
arrays, so the loss is a deterministic, differentiable function of the
angles and finite-difference checks are well posed.

Optimization is plain Adam from the classical dual-rotating-retarder
initialization, with cosine step-size decay, an 80/20 held-out split,
and best-iterate tracking on the held-out loss.
"""

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .polarization import (
    linear_polarizer,
    quarter_wave_plate,
    rotation_mueller,
    rotation_mueller_deriv,
)
from .ellipsometry import (
    ANALYZER_ANGLES_DEG,
    AngleSchedule,
    UNPOLARIZED,
    design_matrix,
    drr_schedule,
    pinv_truncated,
)

RANK_TOL = 1e-10
_LP0 = 0.5 * np.array([
    [1.0, 1.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0],
])
_QWP0 = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0, 0.0],
])


def _element_and_deriv(m0, theta):
    """M(theta) = R M0 R^-1 and its angle derivative."""
    r_pos = rotation_mueller(theta)
    r_neg = rotation_mueller(-theta)
    d_pos = rotation_mueller_deriv(theta)
    d_neg = rotation_mueller_deriv(-theta)
    m = r_pos @ m0 @ r_neg
    dm = d_pos @ m0 @ r_neg - r_pos @ m0 @ d_neg
    return m, dm


def _vec(mats):
    mats = np.asarray(mats, dtype=float)
    if mats.ndim == 2:
        mats = mats[None]
    return mats.reshape(mats.shape[0], 16)


def _pieces(schedule):
    """Source/analyzer vectors and their per-angle derivatives."""
    k = schedule.n_captures
    c = np.empty((k, 4))
    dc1 = np.empty((k, 4))
    dc2 = np.empty((k, 4))
    pa = schedule.sensor_mode == "polarizer_array"
    rows_per = 4 if pa else 1
    r = np.empty((rows_per * k, 4))
    dr3 = np.empty((rows_per * k, 4))
    dr4 = np.zeros((rows_per * k, 4))
    analyzers = [linear_polarizer(np.deg2rad(q)) for q in ANALYZER_ANGLES_DEG]
    for i in range(k):
        l1, dl1 = _element_and_deriv(_LP0, schedule.theta1[i])
        q2, dq2 = _element_and_deriv(_QWP0, schedule.theta2[i])
        q3, dq3 = _element_and_deriv(_QWP0, schedule.theta3[i])
        c[i] = q2 @ (l1 @ UNPOLARIZED)
        dc1[i] = q2 @ (dl1 @ UNPOLARIZED)
        dc2[i] = dq2 @ (l1 @ UNPOLARIZED)
        if pa:
            for j, analyzer in enumerate(analyzers):
                r[4 * i + j] = (analyzer @ q3)[0]
                dr3[4 * i + j] = (analyzer @ dq3)[0]
        else:
            l4, dl4 = _element_and_deriv(_LP0, schedule.theta4[i])
            r[i] = (l4 @ q3)[0]
            dr3[i] = (l4 @ dq3)[0]
            dr4[i] = (dl4 @ q3)[0]
    return c, dc1, dc2, r, dr3, dr4, rows_per


def _design_from_pieces(c, r, rows_per):
    c_rows = np.repeat(c, rows_per, axis=0) if rows_per > 1 else c
    return np.einsum("ki,kj->kij", r, c_rows).reshape(r.shape[0], 16)


def default_trainable(sensor_mode):
    """All four columns in intensity mode; no detector LP with an array sensor."""
    if sensor_mode == "polarizer_array":
        return (True, True, True, False)
    return (True, True, True, True)


def loss(schedule, mats, noise):
    """
    Monte Carlo reconstruction loss for explicit noise draws.

    mats: (B, 4, 4) scene blocks. noise: (B, K') or (B, D, K') draws;
    D draws per sample average over repeated measurements of the same
    block. Returns the mean squared Frobenius reconstruction error.
    """
    m = _vec(mats)
    c, _, _, r, _, _, rows_per = _pieces(schedule)
    a = _design_from_pieces(c, r, rows_per)
    a_pinv, _, _ = pinv_truncated(a)
    noise = np.asarray(noise, dtype=float)
    if noise.ndim == 3:
        m = np.repeat(m, noise.shape[1], axis=0)
        noise = noise.reshape(-1, noise.shape[2])
    if noise.shape != (m.shape[0], a.shape[0]):
        raise ValueError("noise draws have shape %r, expected (%d, %d)"
                         % (noise.shape, m.shape[0], a.shape[0]))
    y = m @ a.T + noise
    resid = y @ a_pinv.T - m
    return float(np.mean(np.sum(resid * resid, axis=1)))


def grad_loss(schedule, mats, noise, trainable=None):
    """
    Analytic gradient of ``loss`` over the trainable angle columns.

    Returns (grads, rank_marginal) where grads is a (4, K) array with
    untrainable entries zero, and rank_marginal flags singular values
    close enough to the truncation cutoff that the fixed-rank gradient
    is a subgradient surrogate.
    """
    if trainable is None:
        trainable = default_trainable(schedule.sensor_mode)
    m = _vec(mats)
    c, dc1, dc2, r, dr3, dr4, rows_per = _pieces(schedule)
    a = _design_from_pieces(c, r, rows_per)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s[0] <= 0:
        raise ValueError("design matrix is identically zero")
    cutoff = RANK_TOL * s[0]
    keep = s > cutoff
    rank_marginal = bool(np.any((s > cutoff * 1e-2) & (s < cutoff * 1e2) & keep))
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    a_pinv = (vt.T * inv) @ u.T

    noise = np.asarray(noise, dtype=float)
    if noise.ndim == 3:
        m = np.repeat(m, noise.shape[1], axis=0)
        noise = noise.reshape(-1, noise.shape[2])
    n_total = m.shape[0]
    y = m @ a.T + noise
    resid = y @ a_pinv.T - m

    yr = y.T @ resid                      # (K', 16)
    ry = yr.T                             # (16, K')
    mr = m.T @ resid                      # (16, 16)
    proj_left = np.eye(a.shape[0]) - a @ a_pinv
    proj_right = np.eye(16) - a_pinv @ a
    g = (-a_pinv @ yr @ a_pinv
         + (a_pinv @ a_pinv.T) @ ry @ proj_left
         + proj_right @ ry @ (a_pinv.T @ a_pinv)
         + mr @ a_pinv)                   # (16, K'), dL = (2/N) tr(dA g)
    g_blocks = g.T.reshape(a.shape[0], 4, 4)

    k = schedule.n_captures
    grads = np.zeros((4, k))
    scale = 2.0 / n_total
    c_rows = np.repeat(c, rows_per, axis=0) if rows_per > 1 else c
    for i in range(k):
        rows = range(rows_per * i, rows_per * (i + 1))
        if trainable[0]:
            grads[0, i] = scale * sum(r[row] @ g_blocks[row] @ dc1[i] for row in rows)
        if trainable[1]:
            grads[1, i] = scale * sum(r[row] @ g_blocks[row] @ dc2[i] for row in rows)
        if trainable[2]:
            grads[2, i] = scale * sum(dr3[row] @ g_blocks[row] @ c_rows[row] for row in rows)
        if trainable[3] and schedule.sensor_mode == "intensity":
            grads[3, i] = scale * sum(dr4[row] @ g_blocks[row] @ c_rows[row] for row in rows)
    return grads, rank_marginal


def expected_noise_floor(schedule, noise_sigma, coaxial=False):
    """Analytic full-rank loss floor: sigma^2 ||A+||_F^2."""
    a = design_matrix(schedule, coaxial=coaxial).a
    a_pinv, _, _ = pinv_truncated(a)
    return float(noise_sigma ** 2 * np.sum(a_pinv * a_pinv))


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainingConfig:
    """Everything a training run needs; hashable for provenance."""

    samples: np.ndarray = field(repr=False)     # (n, 4, 4) training ensemble
    k: int = 36
    sensor_mode: str = "intensity"
    noise_sigma: float = 5e-4
    iterations: int = 2000
    batch_size: int = 32
    step_size: float = 1e-2
    draws: int = 4
    seed: int = 0
    trainable: tuple = None
    holdout_fraction: float = 0.2
    eval_every: int = 25
    eval_draws: int = 32

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 3 or samples.shape[1:] != (4, 4):
            raise ValueError("samples must be (n, 4, 4)")
        if self.k < 1:
            raise ValueError("K must be >= 1")
        if self.batch_size > samples.shape[0]:
            raise ValueError("batch size exceeds the ensemble size")
        if self.trainable is None:
            object.__setattr__(self, "trainable", default_trainable(self.sensor_mode))

    def digest(self):
        payload = {
            "k": self.k, "sensor_mode": self.sensor_mode,
            "noise_sigma": self.noise_sigma, "iterations": self.iterations,
            "batch_size": self.batch_size, "step_size": self.step_size,
            "draws": self.draws, "seed": self.seed,
            "trainable": list(self.trainable),
            "holdout_fraction": self.holdout_fraction,
            "eval_every": self.eval_every, "eval_draws": self.eval_draws,
        }
        h = hashlib.sha256(json.dumps(payload, sort_keys=True).encode())
        h.update(np.ascontiguousarray(self.samples).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class LearnedSchedule:
    """Training outcome: best-held-out schedule plus the loss record."""

    schedule: AngleSchedule
    loss_curve: np.ndarray = field(repr=False)          # per-iteration batch loss
    heldout_iters: np.ndarray = field(repr=False)
    heldout_curve: np.ndarray = field(repr=False)       # raw held-out losses
    best_curve: np.ndarray = field(repr=False)          # running minimum
    best_heldout_loss: float = np.inf
    init_heldout_loss: float = np.inf
    config_hash: str = ""


def _angles_of(schedule):
    return np.stack([schedule.theta1, schedule.theta2, schedule.theta3, schedule.theta4])


def _schedule_from_angles(angles, sensor_mode, fixed):
    return AngleSchedule(angles[0], angles[1], angles[2], angles[3],
                         sensor_mode=sensor_mode, fixed=fixed)


def learn(config):
    """
    Optimize a schedule with Adam from the dual-rotating-retarder start.

    Deterministic for a given config. Raises RuntimeError if the batch
    loss diverges past 1000x its initial value.
    """
    rng = np.random.default_rng(config.seed)
    n = config.samples.shape[0]
    n_hold = max(1, int(round(config.holdout_fraction * n)))
    perm = rng.permutation(n)
    hold_set = config.samples[perm[:n_hold]]
    train_set = config.samples[perm[n_hold:]]
    if train_set.shape[0] < config.batch_size:
        raise ValueError("not enough training samples after the held-out split")

    init = drr_schedule(config.k, sensor_mode=config.sensor_mode)
    fixed = tuple(not t for t in config.trainable)
    angles = _angles_of(init)
    mask = np.zeros_like(angles, dtype=bool)
    for col, trainable in enumerate(config.trainable):
        if trainable and not (config.sensor_mode == "polarizer_array" and col == 3):
            mask[col] = True

    n_rows = init.n_rows
    hold_noise = np.random.default_rng(config.seed + 1).normal(
        0.0, config.noise_sigma, size=(hold_set.shape[0], config.eval_draws, n_rows))

    def heldout_loss(sched):
        return loss(sched, hold_set, hold_noise)

    sched = init
    init_hold = heldout_loss(sched)
    best_hold = init_hold
    best_angles = angles.copy()
    heldout_iters = [0]
    heldout_curve = [init_hold]
    best_curve = [init_hold]

    flat = angles[mask]
    adam_m = np.zeros_like(flat)
    adam_v = np.zeros_like(flat)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    loss_curve = np.empty(config.iterations)
    initial_batch_loss = None

    for it in range(config.iterations):
        lr = config.step_size * 0.5 * (1.0 + np.cos(np.pi * it / max(1, config.iterations)))
        batch_idx = rng.choice(train_set.shape[0], size=config.batch_size, replace=False)
        batch = train_set[batch_idx]
        noise = rng.normal(0.0, config.noise_sigma,
                           size=(config.batch_size, config.draws, n_rows))
        batch_loss = loss(sched, batch, noise)
        grads, _ = grad_loss(sched, batch, noise, config.trainable)
        loss_curve[it] = batch_loss
        if initial_batch_loss is None:
            initial_batch_loss = batch_loss
        if batch_loss > 1e3 * max(initial_batch_loss, 1e-300):
            raise RuntimeError(
                "angle learning diverged at iteration %d: batch loss %.3e vs initial %.3e"
                % (it, batch_loss, initial_batch_loss))

        g_flat = grads[mask]
        adam_m = beta1 * adam_m + (1.0 - beta1) * g_flat
        adam_v = beta2 * adam_v + (1.0 - beta2) * g_flat * g_flat
        m_hat = adam_m / (1.0 - beta1 ** (it + 1))
        v_hat = adam_v / (1.0 - beta2 ** (it + 1))
        flat = flat - lr * m_hat / (np.sqrt(v_hat) + eps)
        angles[mask] = flat
        sched = _schedule_from_angles(angles, config.sensor_mode, fixed)

        if (it + 1) % config.eval_every == 0 or it + 1 == config.iterations:
            hold = heldout_loss(sched)
            heldout_iters.append(it + 1)
            heldout_curve.append(hold)
            if hold < best_hold:
                best_hold = hold
                best_angles = angles.copy()
            best_curve.append(best_hold)

    final_angles = np.mod(best_angles, np.pi)
    final = _schedule_from_angles(final_angles, config.sensor_mode, fixed)
    return LearnedSchedule(
        schedule=final,
        loss_curve=loss_curve,
        heldout_iters=np.asarray(heldout_iters),
        heldout_curve=np.asarray(heldout_curve),
        best_curve=np.asarray(best_curve),
        best_heldout_loss=float(best_hold),
        init_heldout_loss=float(init_hold),
        config_hash=config.digest(),
    )


def evaluate(schedule, samples, noise_sigma, draws=32, seed=0):
    """
    Reconstruction-error statistics of a schedule on an ensemble.

    Returns mean squared Frobenius error (the loss metric) plus
    mean/median/decile statistics of the unsquared Frobenius error.
    """
    samples = np.asarray(samples, dtype=float)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_sigma, size=(samples.shape[0], draws, schedule.n_rows))
    m = _vec(samples)
    a = design_matrix(schedule).a
    a_pinv, _, _ = pinv_truncated(a)
    y = np.einsum("ni,ki->nk", m, a)[:, None, :] + noise
    recon = np.einsum("ndk,ik->ndi", y, a_pinv)
    err_sq = np.sum((recon - m[:, None, :]) ** 2, axis=2)
    err = np.sqrt(err_sq)
    return {
        "mean_squared": float(err_sq.mean()),
        "mean": float(err.mean()),
        "median": float(np.median(err)),
        "p10": float(np.quantile(err, 0.10)),
        "p90": float(np.quantile(err, 0.90)),
        "n_samples": int(samples.shape[0]),
        "n_draws": int(draws),
    }


def cross_validate(config, n_folds=5, comparison_schedules=None):
    """
    K-fold harness: train on all but one fold, evaluate on the held-out
    fold, and score any comparison schedules on the same folds.

    Returns a list of per-fold dicts with the learned schedule's test
    error under key 'learned' plus one key per comparison schedule.
    """
    samples = config.samples
    n = samples.shape[0]
    if n < n_folds:
        raise ValueError("need at least one sample per fold")
    comparison_schedules = comparison_schedules or {}
    perm = np.random.default_rng(config.seed).permutation(n)
    folds = np.array_split(perm, n_folds)
    results = []
    for i, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(perm, test_idx, assume_unique=True)
        fold_config = replace(config, samples=samples[train_idx], seed=config.seed + 101 * i)
        learned = learn(fold_config)
        test = samples[test_idx]
        entry = {
            "fold": i,
            "learned": evaluate(learned.schedule, test, config.noise_sigma,
                                draws=config.eval_draws, seed=config.seed + i)["mean_squared"],
            "learned_schedule": learned,
        }
        for name, sched in comparison_schedules.items():
            entry[name] = evaluate(sched, test, config.noise_sigma,
                                   draws=config.eval_draws, seed=config.seed + i)["mean_squared"]
        results.append(entry)
    return results
