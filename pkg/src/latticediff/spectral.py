"""Spectral analysis of the fiber generator: stationary state, gaps, diffusion.

The population fiber at p = 0 is a Markov generator whose kernel is the
Gibbs-in-level, flat-in-momentum state; its top eigenvalue moves off zero
quadratically in the fiber momentum p, and the (positive definite) matrix
of that quadratic decay rate is the diffusion tensor.  Two independent
routes compute it: finite differences of the tracked top eigenvalue, and
a kernel-projected linear solve in the similarity-transformed (symmetric)
frame.  Both are cross-checked against kinetic Monte Carlo elsewhere.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .generator import assemble_fiber, build_rate_table, escape_rates, symmetrize
from .model import dispersion_grad


class ConvergenceError(Exception):
    """An iterative solve did not reach its tolerance within its budget."""


class TrackingLossError(Exception):
    """Eigenvalue continuation lost the branch it was following."""


class FDInconsistencyError(Exception):
    """Finite-difference step-halving check failed."""


def stationary_state(m00, ansatz=None, tol=1e-12, max_iter=8):
    """Kernel vector of the population generator, normalized to total mass 1.

    Shifted inverse iteration: the shift sits a hair off zero so the
    factorization is regular while the kernel component is amplified by
    ~gap/shift per sweep.  Converges in two sweeps from any start that is
    not orthogonal to the kernel; callers pass the Gibbs ansatz.
    """
    m00 = np.asarray(m00)
    n = m00.shape[0]
    scale = float(np.abs(m00).max())
    shift = 1e-10 * scale
    v = np.ones(n) if ansatz is None else np.asarray(ansatz, dtype=float).copy()
    v /= np.abs(v).sum()
    lu = lu_factor(m00.real - shift * np.eye(n))
    for _ in range(max_iter):
        v = lu_solve(lu, v)
        v /= np.abs(v).sum()
        resid = float(np.abs(m00 @ v).max())
        if resid <= tol * scale:
            if v.sum() < 0:
                v = -v
            return v
    raise ConvergenceError(
        f"stationary state iteration stalled at residual {resid:.2e}"
    )


def _two_sided_rayleigh(matrix, sigma0, v0, w0=None, tol=1e-13, max_iter=60):
    """Track one eigentriple (eig, right, left) near sigma0 from v0."""
    m = np.asarray(matrix, dtype=complex)
    n = m.shape[0]
    eye = np.eye(n)
    scale = float(np.abs(m).max()) or 1.0
    v = np.asarray(v0, dtype=complex).copy()
    v /= np.linalg.norm(v)
    w = v.conj().copy() if w0 is None else np.asarray(w0, dtype=complex).copy()
    w /= np.linalg.norm(w)
    sigma = complex(sigma0)
    for _ in range(max_iter):
        try:
            lu = lu_factor(m - sigma * eye)
            v_new = lu_solve(lu, v)
            w_new = lu_solve(lu, w, trans=2)
        except Exception:
            v_new = np.full(n, np.nan)
        if not np.all(np.isfinite(v_new)):
            sigma += 1e-12 * scale * (1.0 + 1j)
            continue
        v = v_new / np.linalg.norm(v_new)
        w = w_new / np.linalg.norm(w_new)
        denom = w.conj() @ v
        if abs(denom) < 1e-14:
            raise TrackingLossError("left/right eigenvectors became orthogonal")
        sigma_new = (w.conj() @ (m @ v)) / denom
        resid = float(np.linalg.norm(m @ v - sigma_new * v))
        sigma = sigma_new
        if resid <= tol * scale:
            return complex(sigma), v, w
    raise TrackingLossError(
        f"eigenvalue iteration did not converge (residual {resid:.2e})"
    )


def perron_eigenvalue(matrix, v0=None, sigma0=None):
    """Eigenvalue of maximal real part with its right and left eigenvectors.

    Without a starting vector the full dense spectrum is computed and the
    top eigenvalue refined; with one, shifted two-sided Rayleigh iteration
    continues from (sigma0, v0), which is the continuation path used when
    scanning fibers.
    """
    m = np.asarray(matrix)
    if v0 is None:
        eigvals = np.linalg.eigvals(m)
        sigma0 = eigvals[np.argmax(eigvals.real)]
        rng = np.random.default_rng(0)
        v0 = rng.standard_normal(m.shape[0]) + 1j * rng.standard_normal(m.shape[0])
        # one plain inverse iteration step pulls v0 toward the target space
        return _two_sided_rayleigh(m, sigma0 + 1e-10 * np.abs(m).max(), v0)
    if sigma0 is None:
        sigma0 = (np.conj(v0) @ (m @ v0)) / (np.conj(v0) @ v0)
    return _two_sided_rayleigh(m, sigma0, v0)


@dataclass(frozen=True)
class FiberScanPoint:
    p: tuple
    eigenvalue: complex
    bulk_top: float      # max real part of the rest of the a = 0 spectrum
    gap: float           # elevation of the tracked eigenvalue above the rest


def _bulk_top(eigvals, tracked):
    rest = eigvals[np.argsort(np.abs(eigvals - tracked))[1:]]
    return float(rest.real.max()) if len(rest) else -math.inf


def perron_curve(cfg, table, p_list, dense_every=1, max_step_growth=None):
    """Track the top eigenvalue of the population fiber along a p path.

    Starts from the exact zero mode at p = 0 and follows it by two-sided
    Rayleigh iteration; every `dense_every` steps the full spectrum is
    computed to measure the gap to the bulk.  Raises TrackingLossError
    when the followed eigenvalue jumps by more than the expected fiber
    derivative allows (branch collision).
    """
    gibbs = np.repeat(np.exp(-cfg.beta * np.asarray(table.levels)),
                      cfg.grid.points_per_axis ** cfg.dim)
    eig = 0.0 + 0.0j
    right = gibbs / np.linalg.norm(gibbs)
    left = np.ones_like(right) / math.sqrt(len(right))
    grad_scale = float(np.abs(dispersion_grad(
        cfg.dispersion, cfg.grid_points(), dim=cfg.dim)).max())
    points = []
    prev_p = np.zeros(cfg.dim)
    for i, p in enumerate(p_list):
        p = np.atleast_1d(np.asarray(p, dtype=float))
        block = assemble_fiber(cfg, table, p, 0.0)
        eig_new, right, left = _two_sided_rayleigh(
            block.matrix, eig, right, left)
        step = float(np.linalg.norm(p - prev_p))
        allowed = max_step_growth or (4.0 * grad_scale * step + 1e-8)
        if abs(eig_new - eig) > allowed:
            raise TrackingLossError(
                f"eigenvalue moved {abs(eig_new - eig):.3e} over step {step:.3e}"
            )
        if i % dense_every == 0:
            eigvals = np.linalg.eigvals(block.matrix)
            bulk = _bulk_top(eigvals, eig_new)
        else:
            bulk = math.nan
        points.append(FiberScanPoint(
            p=tuple(p), eigenvalue=complex(eig_new), bulk_top=bulk,
            gap=float(eig_new.real - bulk) if math.isfinite(bulk) else math.nan,
        ))
        eig, prev_p = eig_new, p
    return points


def coherence_top(table, bohr):
    """Exact max real part of an a != 0 fiber: -(j(e) + j(e')) / 2."""
    from .generator import _level_pair

    rates = escape_rates(table)
    i, j = _level_pair(np.asarray(table.levels), bohr)
    return -0.5 * (rates[i] + rates[j])


@dataclass(frozen=True)
class GapReport:
    g_low: float
    g_high: float
    p_star: float
    gap_at_zero: float
    coherence_tops: dict
    small_points: tuple
    large_points: tuple

    def to_dict(self):
        return {
            "g_low": self.g_low,
            "g_high": self.g_high,
            "p_star": self.p_star,
            "gap_at_zero": self.gap_at_zero,
            "coherence_tops": {str(k): v for k, v in self.coherence_tops.items()},
        }


def spectral_gaps(cfg, table=None, p_small=None, p_large=None):
    """Bulk-separation rates for small and large momentum fibers.

    g_low bounds the bulk below the tracked eigenvalue over the small
    fibers (and above it only the tracked branch survives); g_high bounds
    the whole spectrum away from the axis on the large fibers.  The a != 0
    fibers are diagonal, so their tops come from the escape rates exactly.
    """
    if table is None:
        table = build_rate_table(cfg)

    def ray(scale):
        p = np.zeros(cfg.dim)
        p[0] = scale
        return p

    if p_small is None:
        p_small = [ray(s) for s in (0.0, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5)]
    if p_large is None:
        p_large = [ray(s) for s in (math.pi / 2, 3 * math.pi / 4, math.pi)]

    coherence = {a: coherence_top(table, a)
                 for a in np.unique([c.bohr for c in table.channels])}
    coh_max = max(coherence.values()) if coherence else -math.inf

    points = perron_curve(cfg, table, p_small)
    elevations = []
    for pt in points:
        bulk = max(pt.bulk_top, coh_max)
        elevations.append((float(np.linalg.norm(np.real(pt.p))),
                           pt.eigenvalue.real, bulk))
    g_low = min(-bulk for _, _, bulk in elevations)
    # adaptive small-fiber radius: largest |p| at which the tracked branch
    # stays elevated with at least half the low-fiber gap to spare
    p_star = 0.0
    for radius, re_eig, bulk in elevations:
        if re_eig > -g_low and re_eig - bulk > 0.5 * g_low:
            p_star = max(p_star, radius)
    gap_at_zero = points[0].gap

    large_points = []
    g_high = math.inf
    for p in p_large:
        block = assemble_fiber(cfg, table, p, 0.0)
        top = float(np.linalg.eigvals(block.matrix).real.max())
        top = max(top, coh_max)
        large_points.append((tuple(p), top))
        g_high = min(g_high, -top)

    return GapReport(
        g_low=float(g_low), g_high=float(g_high), p_star=float(p_star),
        gap_at_zero=float(gap_at_zero), coherence_tops=coherence,
        small_points=tuple(elevations), large_points=tuple(large_points),
    )


def _track_eigenvalue_at(cfg, table, p, gibbs):
    block = assemble_fiber(cfg, table, np.asarray(p, dtype=float), 0.0)
    eig, _, _ = _two_sided_rayleigh(block.matrix, 0.0, gibbs)
    return eig


def _hessian_once(cfg, table, h, gibbs):
    d = cfg.dim
    f = {}

    def at(vec):
        key = tuple(np.round(np.asarray(vec) / h).astype(int))
        if key not in f:
            f[key] = _track_eigenvalue_at(cfg, table, np.asarray(vec, float), gibbs)
        return f[key]

    center = at(np.zeros(d))
    grad = np.zeros(d, dtype=complex)
    hess = np.zeros((d, d), dtype=complex)
    for i in range(d):
        e_i = np.zeros(d)
        e_i[i] = h
        fp, fm = at(e_i), at(-e_i)
        grad[i] = (fp - fm) / (2 * h)
        hess[i, i] = (fp + fm - 2 * center) / h ** 2
    for i in range(d):
        for j in range(i + 1, d):
            e_ij = np.zeros(d)
            e_ij[i] = h
            e_ij[j] = h
            e_im = np.zeros(d)
            e_im[i] = h
            e_im[j] = -h
            val = (at(e_ij) + at(-e_ij) - at(e_im) - at(-e_im)) / (4 * h ** 2)
            hess[i, j] = hess[j, i] = val
    return grad, hess


@dataclass(frozen=True)
class HessianDiffusion:
    tensor: np.ndarray
    gradient_norm: float
    imag_norm: float
    richardson_defect: float


def diffusion_tensor_hessian(cfg, table=None, h=1e-3):
    """Diffusion tensor from central second differences of the fiber curve.

    The top eigenvalue behaves as -(1/2) p . D p near p = 0, so the tensor
    is minus the finite-difference Hessian.  Both the gradient (must
    vanish by inversion symmetry) and the step-halving Richardson defect
    are diagnostics; the returned tensor is the Richardson extrapolant.
    """
    if table is None:
        table = build_rate_table(cfg)
    gibbs = np.repeat(np.exp(-cfg.beta * np.asarray(table.levels)),
                      cfg.grid.points_per_axis ** cfg.dim).astype(complex)
    grad_h, hess_h = _hessian_once(cfg, table, h, gibbs)
    grad_2, hess_2 = _hessian_once(cfg, table, h / 2, gibbs)
    d_h = -hess_h
    d_2 = -hess_2
    extrap = (4.0 * d_2 - d_h) / 3.0
    tensor = extrap.real
    scale = max(float(np.abs(tensor).max()), 1e-300)
    defect = float(np.abs(d_2 - d_h).max()) / scale
    if defect > 1e-4:
        raise FDInconsistencyError(
            f"Hessian step-halving moved the tensor by {defect:.2e} relative"
        )
    return HessianDiffusion(
        tensor=0.5 * (tensor + tensor.T),
        gradient_norm=float(np.abs(np.concatenate([grad_h, grad_2])).max()),
        imag_norm=float(np.abs(extrap.imag).max()),
        richardson_defect=defect,
    )


def _projected_cg(apply_a, b, project, tol=1e-10, max_iter=None):
    """Conjugate gradients for a PSD operator restricted off its kernel."""
    n = len(b)
    max_iter = max_iter or 10 * n
    x = np.zeros_like(b)
    r = project(b.copy())
    p = r.copy()
    rs = r @ r
    b_norm = math.sqrt(float(b @ b)) or 1.0
    for _ in range(max_iter):
        if math.sqrt(rs) <= tol * b_norm:
            return x
        ap = project(apply_a(p))
        alpha = rs / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        rs_new = r @ r
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise ConvergenceError(
        f"projected CG stalled at residual {math.sqrt(rs) / b_norm:.2e}"
    )


def diffusion_tensor_formula(cfg, table=None, tol=1e-10):
    """Diffusion tensor from the symmetrized resolvent formula.

    In the similarity-transformed frame the population block is symmetric
    negative semidefinite with a one-dimensional kernel; the tensor is

        D_ij = 2 <b_i, (-M)^-1 b_j> / <phi, phi>,
        b_i = (d eps / d k_i) phi,

    where phi is the transformed stationary vector and the inverse is
    taken on the kernel's orthogonal complement by projected conjugate
    gradients.  The velocity rows b_i are odd under k -> -k while phi is
    even, so solvability (b_i orthogonal to the kernel) holds exactly.
    """
    if table is None:
        table = build_rate_table(cfg)
    block = assemble_fiber(cfg, table, np.zeros(cfg.dim), 0.0)
    sym = symmetrize(block, cfg.spin, cfg.beta).real
    n_cells = cfg.grid.points_per_axis ** cfg.dim
    n_lvl = len(table.levels)
    phi = np.repeat(np.exp(-0.5 * cfg.beta * np.asarray(table.levels)), n_cells)
    grad = dispersion_grad(cfg.dispersion, cfg.grid_points(), dim=cfg.dim)
    q = phi / np.linalg.norm(phi)

    def project(vec):
        return vec - (q @ vec) * q

    def apply_a(vec):
        return -(sym @ vec)

    d = cfg.dim
    tensor = np.zeros((d, d))
    solutions = []
    for i in range(d):
        b = np.tile(grad[:, i], n_lvl) * phi
        overlap = abs(q @ b) / (np.linalg.norm(b) or 1.0)
        if overlap > 1e-10:
            raise ConvergenceError(
                f"velocity row {i} not orthogonal to the kernel ({overlap:.2e})"
            )
        solutions.append(_projected_cg(apply_a, b, project, tol=tol))
    norm2 = float(phi @ phi)
    for i in range(d):
        b_i = np.tile(grad[:, i], n_lvl) * phi
        for j in range(d):
            tensor[i, j] = 2.0 * float(b_i @ solutions[j]) / norm2
    return 0.5 * (tensor + tensor.T)


@dataclass(frozen=True)
class SpectralReport:
    eigencurve: tuple          # (p, complex eigenvalue) samples
    gaps: GapReport
    stationary: np.ndarray
    diffusion_hessian: np.ndarray
    diffusion_formula: np.ndarray
    method_tags: dict

    def to_dict(self):
        return {
            "eigencurve": [
                {"p": list(p), "re": v.real, "im": v.imag}
                for p, v in self.eigencurve
            ],
            "gaps": self.gaps.to_dict(),
            "diffusion_hessian": self.diffusion_hessian.tolist(),
            "diffusion_formula": self.diffusion_formula.tolist(),
            "method_tags": self.method_tags,
        }


def spectral_report(cfg, table=None, p_samples=None, fd_step=1e-3):
    """One-stop spectral summary used by the command-line interface."""
    if table is None:
        table = build_rate_table(cfg)
    gaps = spectral_gaps(cfg, table)
    if p_samples is None:
        p_samples = [np.concatenate([[s], np.zeros(cfg.dim - 1)])
                     for s in np.linspace(0.0, 0.5, 11)]
    curve = perron_curve(cfg, table, p_samples, dense_every=len(p_samples))
    block0 = assemble_fiber(cfg, table, np.zeros(cfg.dim), 0.0)
    gibbs = np.repeat(np.exp(-cfg.beta * np.asarray(table.levels)),
                      cfg.grid.points_per_axis ** cfg.dim)
    stat = stationary_state(block0.matrix, ansatz=gibbs)
    hess = diffusion_tensor_hessian(cfg, table, h=fd_step)
    formula = diffusion_tensor_formula(cfg, table)
    return SpectralReport(
        eigencurve=tuple((pt.p, pt.eigenvalue) for pt in curve),
        gaps=gaps,
        stationary=stat,
        diffusion_hessian=hess.tensor,
        diffusion_formula=formula,
        method_tags={
            "stationary": "inverse-iteration",
            "eigencurve": "rayleigh-continuation",
            "diffusion_hessian": "finite-difference+richardson",
            "diffusion_formula": "projected-cg",
        },
    )
