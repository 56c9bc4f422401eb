"""Kinetic Monte Carlo for the population jump process.

Simulates the classical process underlying the population fiber: free
flight of the position at the group velocity (the dispersion gradient)
interrupted by jumps that change the internal level and kick the momentum
by the level gap times a uniformly random direction.  The momentum is kept
continuous (no grid), which makes the sampler the higher-fidelity oracle
against grid-based spectral results.

Trajectories are simulated in fixed-size blocks, each with its own
counter-keyed Philox stream, and block statistics are reduced by a
deterministic pairwise tree: results are bit-reproducible for a fixed seed
and independent of the worker thread count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .generator import build_rate_table


BLOCK_SIZE = 32768


@dataclass(frozen=True)
class ParticleState:
    """Instantaneous state of one walker."""

    x: tuple
    k: tuple
    level: int
    t: float = 0.0


def _wrap(k):
    return (k + math.pi) % (2.0 * math.pi) - math.pi


class _Process:
    """Precomputed jump data shared by the scalar and vector samplers."""

    def __init__(self, table):
        n = len(table.levels)
        self.dim = table.dim
        self.beta = table.beta
        self.levels = np.asarray(table.levels)
        rates = table.transition_matrix()
        self.total_rate = rates.sum(axis=1)
        with np.errstate(divide="ignore"):
            self.inv_rate = np.where(self.total_rate > 0,
                                     1.0 / np.where(self.total_rate > 0,
                                                    self.total_rate, 1.0),
                                     np.inf)
        prob = np.zeros_like(rates)
        alive = self.total_rate > 0
        prob[alive] = rates[alive] / self.total_rate[alive, None]
        self.cum_prob = np.cumsum(prob, axis=1)
        self.radius = np.abs(self.levels[:, None] - self.levels[None, :])
        gibbs = np.exp(-table.beta * self.levels)
        self.gibbs = gibbs / gibbs.sum()
        self.gibbs_cum = np.cumsum(self.gibbs)
        self._coeffs = table.dispersion.per_axis(table.dim)

    def velocity(self, k):
        # inline gradient of the cosine series; the round loop is hot
        coeffs = self._coeffs
        out = coeffs[:, 0] * np.sin(k)
        for m in range(2, coeffs.shape[1] + 1):
            out += (coeffs[:, m - 1] * m) * np.sin(m * k)
        return out


def step(state, rates, rng, process=None):
    """One Gillespie step: exponential wait, free flight, level jump, kick.

    `rates` is a JumpRateTable; callers stepping in a loop should build
    the `_Process` once and pass it instead.  A level with zero escape
    rate (single-level test mode) never jumps: the walker flies
    ballistically forever and the returned state simply advances by one
    unit of time.
    """
    proc = process or _Process(rates)
    x = np.asarray(state.x, dtype=float)
    k = np.asarray(state.k, dtype=float)
    e = state.level
    rate = proc.total_rate[e]
    if rate <= 0.0:
        wait = 1.0
        x = x + proc.velocity(k) * wait
        return ParticleState(x=tuple(x), k=tuple(k), level=e, t=state.t + wait)
    wait = rng.exponential(1.0 / rate)
    x = x + proc.velocity(k) * wait
    e_new = int(np.searchsorted(proc.cum_prob[e], rng.random()))
    if proc.dim == 1:
        s = np.array([1.0 if rng.random() < 0.5 else -1.0])
    else:
        g = rng.normal(size=proc.dim)
        s = g / np.linalg.norm(g)
    k = _wrap(k + proc.radius[e, e_new] * s)
    return ParticleState(x=tuple(x), k=tuple(k), level=int(e_new),
                         t=state.t + wait)


@dataclass
class _BlockStats:
    count: int
    sum_x: np.ndarray
    sum_xx: np.ndarray
    sum_xx2: np.ndarray
    sum_x2ii: np.ndarray
    level_counts: np.ndarray
    k_counts: np.ndarray
    cgf_sum: np.ndarray
    cgf_moments: np.ndarray   # per probe: [re^2, im^2, re*im] sums

    def merge(self, other):
        return _BlockStats(
            count=self.count + other.count,
            sum_x=self.sum_x + other.sum_x,
            sum_xx=self.sum_xx + other.sum_xx,
            sum_xx2=self.sum_xx2 + other.sum_xx2,
            sum_x2ii=self.sum_x2ii + other.sum_x2ii,
            level_counts=self.level_counts + other.level_counts,
            k_counts=self.k_counts + other.k_counts,
            cgf_sum=self.cgf_sum + other.cgf_sum,
            cgf_moments=self.cgf_moments + other.cgf_moments,
        )


def _simulate_block(proc, n, t_final, seed, block_index, probes, k_bins):
    """Lockstep rounds: every walker processes its r-th event in round r.

    All random draws happen for every slot every round, so the stream
    consumed by a block depends only on (seed, block index, model); the
    worker count never touches it.  Levels with zero escape rate yield an
    infinite waiting time and fly ballistically to t_final.
    """
    rng = np.random.Generator(np.random.Philox(key=np.array(
        [seed % (1 << 64), block_index], dtype=np.uint64)))
    d = proc.dim
    n_lvl = len(proc.levels)
    k = rng.uniform(-math.pi, math.pi, size=(n, d))
    e = np.searchsorted(proc.gibbs_cum, rng.random(n)).clip(0, n_lvl - 1)
    x = np.zeros((n, d))
    t_rem = np.full(n, float(t_final))
    cur_inv = proc.inv_rate[e]
    two_level = n_lvl == 2
    while True:
        u_wait = rng.exponential(size=n)
        u_level = None if two_level else rng.random(n)
        if d == 1:
            s = np.where(rng.random(n) < 0.5, -1.0, 1.0)[:, None]
        else:
            g = rng.normal(size=(n, d))
            s = g / np.linalg.norm(g, axis=1, keepdims=True)
        dt = u_wait * cur_inv
        jump = dt < t_rem
        fly = np.where(jump, dt, t_rem)
        x += proc.velocity(k) * fly[:, None]
        t_rem -= fly
        idx = np.nonzero(jump)[0]
        if len(idx):
            if two_level:
                e_new = 1 - e[idx]
            else:
                rows = proc.cum_prob[e[idx]]
                e_new = (u_level[idx, None] > rows).sum(axis=1).clip(0, n_lvl - 1)
            kick = proc.radius[e[idx], e_new]
            k[idx] = _wrap(k[idx] + kick[:, None] * s[idx])
            e[idx] = e_new
            cur_inv[idx] = proc.inv_rate[e_new]
        if not t_rem.any():
            break

    outer = x[:, :, None] * x[:, None, :]
    stats = _BlockStats(
        count=n,
        sum_x=x.sum(axis=0),
        sum_xx=x.T @ x,
        sum_xx2=(outer ** 2).sum(axis=0),
        sum_x2ii=(x ** 2).sum(axis=0),
        level_counts=np.bincount(e, minlength=n_lvl).astype(float),
        k_counts=np.stack([
            np.histogram(k[:, ax], bins=k_bins, range=(-math.pi, math.pi))[0]
            for ax in range(d)
        ]).astype(float),
        cgf_sum=np.zeros(len(probes), dtype=complex),
        cgf_moments=np.zeros((len(probes), 3)),
    )
    for i, p in enumerate(probes):
        phase = np.exp(-1j * (x @ np.asarray(p, dtype=float)))
        stats.cgf_sum[i] = phase.sum()
        stats.cgf_moments[i] = [float((phase.real ** 2).sum()),
                                float((phase.imag ** 2).sum()),
                                float((phase.real * phase.imag).sum())]
    return stats


def _tree_reduce(items):
    items = list(items)
    while len(items) > 1:
        paired = []
        for i in range(0, len(items) - 1, 2):
            paired.append(items[i].merge(items[i + 1]))
        if len(items) % 2:
            paired.append(items[-1])
        items = paired
    return items[0]


@dataclass(frozen=True)
class CgfEstimate:
    probe: tuple
    value: complex           # (1/t) log E[exp(-i p . x_t)]
    se_real: float
    se_imag: float
    sample_mean: complex     # the raw ensemble average E[exp(-i p . x_t)]

    @property
    def mean_magnitude(self):
        return abs(self.sample_mean)

    def to_dict(self):
        return {
            "probe": list(self.probe),
            "re": self.value.real, "im": self.value.imag,
            "se_real": self.se_real, "se_imag": self.se_imag,
            "sample_mean_re": self.sample_mean.real,
            "sample_mean_im": self.sample_mean.imag,
        }


@dataclass(frozen=True)
class EnsembleStats:
    n_traj: int
    t_final: float
    mean_x: np.ndarray
    mean_x_se: np.ndarray
    cov_x: np.ndarray
    diffusion: np.ndarray        # cov_x / t_final
    diffusion_se: np.ndarray
    level_hist: np.ndarray
    gibbs_expected: np.ndarray
    k_hist: np.ndarray           # per-axis marginal counts
    cgf: tuple
    warnings: tuple

    def k_marginal_tv(self, axis=0):
        counts = self.k_hist[axis]
        frac = counts / counts.sum()
        return 0.5 * float(np.abs(frac - 1.0 / len(frac)).sum())

    def to_dict(self):
        return {
            "n_traj": self.n_traj,
            "t_final": self.t_final,
            "mean_x": self.mean_x.tolist(),
            "mean_x_se": self.mean_x_se.tolist(),
            "cov_x": self.cov_x.tolist(),
            "diffusion": self.diffusion.tolist(),
            "diffusion_se": self.diffusion_se.tolist(),
            "level_hist": self.level_hist.tolist(),
            "gibbs_expected": self.gibbs_expected.tolist(),
            "k_hist": self.k_hist.tolist(),
            "k_marginal_tv": [self.k_marginal_tv(ax)
                              for ax in range(len(self.k_hist))],
            "cgf": [c.to_dict() for c in self.cgf],
            "warnings": list(self.warnings),
        }


def run_ensemble(cfg, n_traj, t_final, probes=(), table=None, threads=1,
                 k_bins=32, g_low=None, block_size=BLOCK_SIZE):
    """Simulate independent walkers and return diffusion/equipartition stats.

    Walkers start at x = 0 with uniform momentum and Gibbs-distributed
    level, which is the stationary law of (k, e); the position estimators
    are therefore free of burn-in apart from the intrinsic velocity
    correlation time.  `probes` requests estimates of the decay rate
    (1/t) log E[exp(-i p . x_t)] at those fiber momenta.
    """
    proc = _Process(table if table is not None else build_rate_table(cfg))
    probes = [np.atleast_1d(np.asarray(p, dtype=float)) for p in probes]
    sizes = [block_size] * (n_traj // block_size)
    if n_traj % block_size:
        sizes.append(n_traj % block_size)

    def job(args):
        b, size = args
        return _simulate_block(proc, size, t_final, cfg.rng_seed, b,
                               probes, k_bins)

    jobs = list(enumerate(sizes))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(job, jobs))
    else:
        blocks = [job(j) for j in jobs]
    total = _tree_reduce(blocks)

    n = total.count
    d = cfg.dim
    mean_x = total.sum_x / n
    cov = (total.sum_xx / n - np.outer(mean_x, mean_x)) * n / (n - 1)
    var_xx = total.sum_xx2 / n - (total.sum_xx / n) ** 2
    diffusion_se = np.sqrt(np.maximum(var_xx, 0.0) / n) / t_final
    var_xi = total.sum_x2ii / n - mean_x ** 2
    mean_se = np.sqrt(np.maximum(var_xi, 0.0) / n)

    cgf_estimates = []
    for i, p in enumerate(probes):
        m = total.cgf_sum[i] / n
        re2, im2, reim = total.cgf_moments[i] / n
        var_re = max(re2 - m.real ** 2, 0.0) / n
        var_im = max(im2 - m.imag ** 2, 0.0) / n
        cov_ri = (reim - m.real * m.imag) / n
        # delta method for log(m)/t, split into real and imaginary parts
        a, b = m.real, m.imag
        mag2 = a * a + b * b
        var_log_re = (a * a * var_re + 2 * a * b * cov_ri + b * b * var_im) / mag2 ** 2
        var_log_im = (a * a * var_im - 2 * a * b * cov_ri + b * b * var_re) / mag2 ** 2
        cgf_estimates.append(CgfEstimate(
            probe=tuple(p),
            value=complex(np.log(m) / t_final),
            se_real=math.sqrt(max(var_log_re, 0.0)) / t_final,
            se_imag=math.sqrt(max(var_log_im, 0.0)) / t_final,
            sample_mean=complex(m),
        ))

    warnings = []
    if g_low is not None and t_final < 10.0 / g_low:
        warnings.append(
            f"t_final = {t_final:g} is below 10 / g_low = {10.0 / g_low:g}: "
            "estimators may not be in the diffusive regime"
        )
    return EnsembleStats(
        n_traj=n, t_final=float(t_final),
        mean_x=mean_x, mean_x_se=mean_se,
        cov_x=cov, diffusion=cov / t_final, diffusion_se=diffusion_se,
        level_hist=total.level_counts,
        gibbs_expected=proc.gibbs * n,
        k_hist=total.k_counts,
        cgf=tuple(cgf_estimates),
        warnings=tuple(warnings),
    )


def cgf_estimate(cfg, p, n_traj, t_final, table=None, threads=1):
    """Decay-rate estimate (1/t) log E[exp(-i p . x_t)] for one probe p."""
    stats = run_ensemble(cfg, n_traj, t_final, probes=[p], table=table,
                         threads=threads)
    est = stats.cgf[0]
    if est.mean_magnitude < 10.0 * max(est.se_real, est.se_imag) * t_final:
        raise RuntimeError(
            "probe magnitude has decayed into the noise floor; "
            "use a smaller |p| or shorter t_final"
        )
    return est


def sample_paths(cfg, n_paths, t_final, table=None, max_events=100000):
    """A few full trajectories (for CSV dumps): rows (path, t, x..., k..., level)."""
    proc = _Process(table if table is not None else build_rate_table(cfg))
    rows = []
    for i in range(n_paths):
        rng = np.random.Generator(np.random.Philox(key=np.array(
            [cfg.rng_seed % (1 << 64), (1 << 32) + i], dtype=np.uint64)))
        state = ParticleState(
            x=tuple(np.zeros(cfg.dim)),
            k=tuple(rng.uniform(-math.pi, math.pi, cfg.dim)),
            level=int(np.searchsorted(proc.gibbs_cum, rng.random())),
        )
        rows.append((i, state.t, state.x, state.k, state.level))
        for _ in range(max_events):
            if state.t >= t_final:
                break
            state = step(state, None, rng, process=proc)
            rows.append((i, state.t, state.x, state.k, state.level))
    return rows
