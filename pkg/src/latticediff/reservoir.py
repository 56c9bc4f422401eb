"""Thermal bath: frequency profile, space-time correlations, decay checks.

The bath enters the model through a single nonnegative frequency profile
psi_hat(omega) obeying the emission/absorption (KMS) relation
psi_hat(-omega) = exp(-beta omega) psi_hat(omega) and psi_hat(0) = 0.  Its
space-time correlation

    psi(x, t) = int dw psi_hat(w) exp(i w t) int_{S^{d-1}} ds exp(i w s.x)

is evaluated by a truncated panel Gauss-Legendre rule in w and a
Gauss-Jacobi rule in the polar variable of the sphere integral.  All
refinement checks double the panel count and polar order and compare.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator

from .sphere import order_for_phase, plane_wave_average, surface_area


class QuadratureError(Exception):
    """Successive quadrature refinements disagree beyond tolerance."""


class FitError(Exception):
    """Decay-law fit could not be performed (e.g. samples underflow)."""


@lru_cache(maxsize=64)
def _legendre_rule(order):
    return np.polynomial.legendre.leggauss(order)


@dataclass(frozen=True)
class QuadSpec:
    """Resolution knobs for the correlation-function quadrature."""

    rel_tol: float = 1e-8
    eta_order: int = 64
    panel_order: int = 16
    phase_per_panel: float = 16.0
    tail_head: float = 60.0       # head length of half-line time integrals
    tail_averages: int = 8        # oscillatory-tail averaging depth
    underflow_floor: float = 1e-220


DEFAULT_QUAD = QuadSpec()


@dataclass(frozen=True)
class BathProfile:
    """Frequency profile of the bath coupling.

    kind "builtin_gaussian": psi_hat(w) = w^nu exp(-w^2/cutoff^2) / (1 - e^{-beta w})
    for w > 0, with nu = d - 2 raised by the smallest even amount that keeps
    psi_hat(0) = 0 in low dimensions (nu = 3, 2, 3 for d = 1, 2, 3).  The
    negative side is always the KMS continuation e^{beta w} psi_hat(-w), so
    the emission/absorption relation holds to the last bit.

    kind "tabulated": values on a nonnegative frequency grid starting at
    (0, 0), shape-preserving cubic interpolation in between, zero beyond
    the last node, KMS continuation for w < 0.
    """

    kind: str
    beta: float
    dim: int
    cutoff: float = 2.0
    table_omega: tuple = ()
    table_values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("builtin_gaussian", "tabulated"):
            raise ValueError(f"unknown bath kind {self.kind!r}")
        if not self.beta > 0:
            raise ValueError("beta must be strictly positive")
        if self.kind == "tabulated":
            om = np.asarray(self.table_omega, dtype=float)
            val = np.asarray(self.table_values, dtype=float)
            if om.ndim != 1 or om.shape != val.shape or len(om) < 2:
                raise ValueError("tabulated profile needs matching 1d omega/value arrays")
            if om[0] != 0.0 or val[0] != 0.0 or np.any(np.diff(om) <= 0):
                raise ValueError("tabulated grid must start at (0, 0) and increase")
            if np.any(val < 0):
                raise ValueError("tabulated values must be nonnegative")
            object.__setattr__(self, "table_omega", tuple(float(v) for v in om))
            object.__setattr__(self, "table_values", tuple(float(v) for v in val))

    @property
    def power(self):
        """Low-frequency exponent of the built-in family."""
        extra = max(0, math.ceil((4 - self.dim) / 2))
        return self.dim - 2 + 2 * extra

    def _positive_branch(self, w):
        """psi_hat on w > 0 (array input, no zero entries)."""
        if self.kind == "builtin_gaussian":
            envelope = w ** self.power * np.exp(-((w / self.cutoff) ** 2))
            return envelope / (-np.expm1(-self.beta * w))
        interp = _table_interp(self.table_omega, self.table_values)
        out = np.where(w <= self.table_omega[-1], interp(w), 0.0)
        return np.clip(out, 0.0, None)

    def psi_hat(self, omega):
        """Effective squared form factor at real frequency omega."""
        w = np.asarray(omega, dtype=float)
        scalar = w.ndim == 0
        w = np.atleast_1d(w)
        out = np.zeros_like(w)
        pos = w > 0
        neg = w < 0
        if pos.any():
            out[pos] = self._positive_branch(w[pos])
        if neg.any():
            # KMS continuation, exact by construction
            out[neg] = np.exp(self.beta * w[neg]) * self._positive_branch(-w[neg])
        return float(out[0]) if scalar else out

    def omega_support(self, rel_cut=1e-16):
        """Truncation radius: |psi_hat| below rel_cut * max outside [-R, R]."""
        return _support_radius(self, rel_cut)

    def to_dict(self):
        if self.kind == "builtin_gaussian":
            return {"kind": "builtin_gaussian", "cutoff": self.cutoff}
        return {
            "kind": "tabulated",
            "omega": list(self.table_omega),
            "values": list(self.table_values),
        }

    @staticmethod
    def from_dict(data, beta, dim):
        kind = data.get("kind", "builtin_gaussian")
        if kind == "builtin_gaussian":
            return BathProfile(kind=kind, beta=beta, dim=dim,
                               cutoff=float(data.get("cutoff", 2.0)))
        return BathProfile(kind=kind, beta=beta, dim=dim,
                           table_omega=tuple(data["omega"]),
                           table_values=tuple(data["values"]))


@lru_cache(maxsize=32)
def _table_interp(omega, values):
    return PchipInterpolator(np.asarray(omega), np.asarray(values), extrapolate=False)


@lru_cache(maxsize=64)
def _support_radius(profile, rel_cut):
    if profile.kind == "tabulated":
        return profile.table_omega[-1]
    hi = profile.cutoff * 14.0 + 4.0 / profile.beta
    w = np.linspace(1e-9, hi, 8193)
    vals = profile._positive_branch(w)
    peak = vals.max()
    above = np.nonzero(vals >= rel_cut * peak)[0]
    return float(w[above[-1]]) + 2.0 * (w[1] - w[0])


def psi_hat(profile, omega):
    """Module-level alias for BathProfile.psi_hat."""
    return profile.psi_hat(omega)


def _omega_nodes(profile, phase_rate, quad, refine=1):
    """Panel Gauss-Legendre nodes on [-R, R], split at the origin.

    The split matters: the thermal branch switch leaves psi_hat only
    piecewise smooth at 0.  Panel widths shrink with the expected phase
    rate (|t| + |x| for the correlation integral).
    """
    radius = profile.omega_support()
    width = quad.phase_per_panel / max(phase_rate, quad.phase_per_panel / radius)
    per_side = max(4, int(math.ceil(radius / width))) * refine
    edges = np.linspace(0.0, radius, per_side + 1)
    gl_x, gl_w = _legendre_rule(quad.panel_order)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    nodes_pos = (mid[:, None] + half[:, None] * gl_x[None, :]).ravel()
    weights_pos = (half[:, None] * gl_w[None, :]).ravel()
    nodes = np.concatenate([-nodes_pos[::-1], nodes_pos])
    weights = np.concatenate([weights_pos[::-1], weights_pos])
    return nodes, weights


def _sphere_rows(d, radii, nodes, base_order):
    """Plane-wave sphere averages S(r |w|) for each radius, chunked in w.

    The Gauss-Jacobi order needed to resolve exp(i r w eta) grows with
    |r w|, so each frequency chunk gets its own order; nodes near w = 0
    stay cheap even when the radius is large.
    """
    rows = np.empty((len(radii), len(nodes)))
    for i, r in enumerate(radii):
        if d == 1:
            rows[i] = 2.0 * np.cos(r * nodes)
            continue
        for lo in range(0, len(nodes), 512):
            sl = slice(lo, min(lo + 512, len(nodes)))
            phase = r * float(np.max(np.abs(nodes[sl])))
            order = order_for_phase(phase, base=base_order)
            rows[i, sl] = plane_wave_average(d, r * nodes[sl], order=order)
    return rows


def _psi_batch_raw(profile, xs, ts, quad, refine):
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    rnorm = np.linalg.norm(xs, axis=1)
    phase_rate = float(np.max(np.abs(ts) + rnorm))
    nodes, weights = _omega_nodes(profile, phase_rate, quad, refine)
    wpsi = weights * profile.psi_hat(nodes)
    d = xs.shape[1]
    unique_r, inverse = np.unique(rnorm, return_inverse=True)
    sphere = _sphere_rows(d, unique_r, nodes, quad.eta_order * refine)
    out = np.empty(len(ts), dtype=complex)
    chunk = max(1, int(2e6 / max(len(nodes), 1)))
    for lo in range(0, len(ts), chunk):
        sl = slice(lo, min(lo + chunk, len(ts)))
        phase = np.exp(1j * np.multiply.outer(ts[sl], nodes))
        out[sl] = (sphere[inverse[sl]] * phase) @ wpsi
    return out


def psi_xt_batch(profile, xs, ts, quad=DEFAULT_QUAD, check=True):
    """Correlation psi(x_j, t_j) for matched arrays of points and times.

    With check=True the panel count and polar order are doubled and the
    two evaluations compared at `quad.rel_tol`; check=False skips the
    doubled pass (used by the decay scans, which need many points but
    only modest accuracy).
    """
    coarse = _psi_batch_raw(profile, xs, ts, quad, refine=1)
    if not check:
        return coarse
    fine = _psi_batch_raw(profile, xs, ts, quad, refine=2)
    scale = np.maximum(np.abs(fine), _floor_scale(profile, quad))
    worst = float(np.max(np.abs(fine - coarse) / scale))
    if worst > quad.rel_tol:
        raise QuadratureError(
            f"correlation quadrature not converged: refinement moved "
            f"result by {worst:.2e} (tolerance {quad.rel_tol:.1e})"
        )
    return fine


@lru_cache(maxsize=64)
def _zero_point_scale(profile):
    nodes, weights = _omega_nodes(profile, 1.0, DEFAULT_QUAD, 1)
    return float(weights @ profile.psi_hat(nodes)) * surface_area(profile.dim)


def _floor_scale(profile, quad):
    return abs(_zero_point_scale(profile)) * quad.underflow_floor


def psi_xt(profile, x, t, quad=DEFAULT_QUAD):
    """Correlation function psi(x, t) at a single space-time point."""
    return complex(psi_xt_batch(profile, [np.atleast_1d(x)], [t], quad)[0])


@dataclass(frozen=True)
class CorrelationSample:
    """One evaluated correlation point; value(x, -t) = conj(value(x, t))
    and the value depends on x through |x| only."""

    x: tuple
    t: float
    value: complex


def correlation_samples(profile, x, times, quad=DEFAULT_QUAD, check=False):
    """psi(x, t) along a time grid at fixed x, as CorrelationSample rows."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    times = np.asarray(times, dtype=float)
    values = psi_xt_batch(profile, np.tile(x_arr, (len(times), 1)), times,
                          quad, check=check)
    return [CorrelationSample(x=tuple(x_arr), t=float(t), value=complex(v))
            for t, v in zip(times, values)]


def _cumulative_halfline(profile, x, a, quad, refine):
    """Partial integrals int_0^{T_j} psi(x, t) e^{i a t} dt at tail anchors.

    Returns (anchors T_j, partial integral values).  Anchors are spaced by
    half an oscillation period of the combined integrand so the caller can
    average the tail out; for |a| ~ 0 the spacing falls back to a fixed
    stride and the tail is Richardson-extrapolated instead.
    """
    a_eff = max(abs(a), 0.25)
    stride = math.pi / a_eff
    head = quad.tail_head
    n_anchor = quad.tail_averages
    anchors = head + stride * np.arange(n_anchor + 1)
    radius = profile.omega_support()
    rate = radius + abs(a)
    edges = [np.linspace(0.0, head, max(4, int(math.ceil(head * rate / quad.phase_per_panel))) * refine + 1)]
    for j in range(n_anchor):
        n_sub = max(2, int(math.ceil(stride * rate / quad.phase_per_panel))) * refine
        edges.append(np.linspace(anchors[j], anchors[j + 1], n_sub + 1)[1:])
    edges = np.concatenate(edges)
    gl_x, gl_w = _legendre_rule(quad.panel_order)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    t_nodes = (mid[:, None] + half[:, None] * gl_x[None, :]).ravel()
    t_weights = (half[:, None] * gl_w[None, :]).ravel()
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    psi_vals = _psi_batch_raw(profile, np.tile(x_arr, (len(t_nodes), 1)), t_nodes,
                              quad, refine)
    contrib = t_weights * psi_vals * np.exp(1j * a * t_nodes)
    per_panel = contrib.reshape(-1, quad.panel_order).sum(axis=1)
    cum = np.concatenate([[0.0], np.cumsum(per_panel)])
    # anchors coincide with panel edges by construction
    idx = np.searchsorted(edges, anchors)
    return anchors, cum[idx]


def half_line_fourier(profile, x, a, quad=DEFAULT_QUAD):
    """int_0^infinity psi(x, t) exp(i a t) dt with oscillatory tail control.

    The built-in profile is only piecewise smooth at omega = 0, so
    psi(x, t) has a power-law tail and plain truncation converges slowly.
    Partial integrals sampled half a period apart are averaged iteratively
    (for |a| away from 0), or Richardson-extrapolated in 1/T (for small
    |a|), which removes the tail to high order.
    """
    def run(refine):
        anchors, partials = _cumulative_halfline(profile, x, a, quad, refine)
        if abs(a) >= 0.25:
            acc = partials
            while len(acc) > 1:
                acc = 0.5 * (acc[:-1] + acc[1:])
            return acc[0]
        # monotone tail: fit partials ~ I - c1/T - c2/T^2 and extrapolate
        design = np.column_stack([np.ones_like(anchors), 1.0 / anchors,
                                  1.0 / anchors ** 2])
        coef_re, *_ = np.linalg.lstsq(design, partials.real, rcond=None)
        coef_im, *_ = np.linalg.lstsq(design, partials.imag, rcond=None)
        return complex(coef_re[0], coef_im[0])

    coarse = run(1)
    fine = run(2)
    scale = max(abs(fine), _floor_scale(profile, quad))
    if abs(fine - coarse) / scale > max(quad.rel_tol, 1e-9) * 50:
        raise QuadratureError(
            f"half-line Fourier integral at a={a} not converged: "
            f"refinement moved result by {abs(fine - coarse) / scale:.2e}"
        )
    return fine


def gain_coefficient_sphere(profile, a, x):
    """Closed sphere form 2 pi psi_hat(a) int_{S^{d-1}} ds e^{i a s.x}."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    r = float(a) * float(np.linalg.norm(x_arr))
    order = order_for_phase(r, base=DEFAULT_QUAD.eta_order)
    return 2.0 * math.pi * profile.psi_hat(a) * float(plane_wave_average(profile.dim, r, order))


def gain_coefficient_position(profile, a, x, quad=DEFAULT_QUAD):
    """Full-line Fourier coefficient int dt e^{-i a t} psi(x, t).

    Hermiticity (psi(x, -t) = conj psi(x, t)) folds the integral onto the
    half line, so the result is real.  Used as the independent oracle for
    the closed sphere form and for the assembled momentum-grid kernel.
    """
    half = half_line_fourier(profile, x, -a, quad)
    return 2.0 * half.real


@dataclass(frozen=True)
class DecayFit:
    v_star: float
    rate: float
    r_squared: float
    passed: bool
    warning: str
    times: tuple
    sup_values: tuple

    def to_dict(self):
        return {
            "v_star": self.v_star,
            "rate": self.rate,
            "r_squared": self.r_squared,
            "passed": self.passed,
            "warning": self.warning,
        }


def _cone_samples(t, v_star, fractions):
    radii = sorted({int(round(f * v_star * t)) for f in fractions})
    return [max(0, r) for r in radii]


def _sup_on_sets(profile, times, radius_lists, dim, quad):
    """sup over sampled lattice |x| of |psi(x, t)| for each time."""
    xs, ts, owner = [], [], []
    for i, (t, radii) in enumerate(zip(times, radius_lists)):
        for r in sorted(set(radii)):
            vec = np.zeros(dim)
            vec[0] = r
            xs.append(vec)
            ts.append(t)
            owner.append(i)
    vals = np.abs(psi_xt_batch(profile, np.array(xs), np.array(ts), quad, check=False))
    sup = np.zeros(len(times))
    for v, i in zip(vals, owner):
        sup[i] = max(sup[i], v)
    return sup


def check_subluminal_decay(profile, v_star, t_max, quad=DEFAULT_QUAD,
                           t_min=5.0, n_t=20,
                           fractions=(0.0, 0.25, 0.5, 0.75, 1.0)):
    """Fit an exponential decay rate to sup |psi| on the cone |x| <= v* t.

    Samples lattice points along an axis (rotational invariance makes the
    axis choice immaterial), fits log sup |psi| against t by least squares
    over [t_min, t_max], and reports the rate and fit quality.  The rate
    degrades as v* approaches the unit propagation speed of the bath,
    which is flagged as a warning for v* >= 0.9.
    """
    if not 0.0 < v_star < 1.0:
        raise ValueError("v_star must lie in (0, 1)")
    times = np.linspace(t_min, t_max, n_t)
    radii = [_cone_samples(t, v_star, fractions) for t in times]
    sup = _sup_on_sets(profile, times, radii, profile.dim, quad)
    keep = sup > 1e-290
    if keep.sum() < 5:
        raise FitError("cone samples underflow: not enough points to fit")
    tt, yy = times[keep], np.log(sup[keep])
    design = np.column_stack([np.ones_like(tt), tt])
    coef, *_ = np.linalg.lstsq(design, yy, rcond=None)
    resid = yy - design @ coef
    ss_tot = float(np.sum((yy - yy.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 0.0
    rate = -float(coef[1])
    warning = ""
    if v_star >= 0.9:
        warning = ("v_star close to the bath propagation speed: "
                   "the fitted decay rate degrades toward zero")
    return DecayFit(
        v_star=v_star, rate=rate, r_squared=r2,
        passed=bool(rate > 0 and r2 >= 0.95), warning=warning,
        times=tuple(tt), sup_values=tuple(np.exp(yy)),
    )


def fit_sup_power(profile, t_min, t_max, quad=DEFAULT_QUAD, n_t=18):
    """Power-law fit of sup_x |psi(x, t)| ~ C (1 + t)^p over [t_min, t_max]."""
    times = np.geomspace(t_min, t_max, n_t)
    radius_lists = []
    for t in times:
        near_cone = {int(math.floor(t)) - 1, int(math.floor(t)), int(math.ceil(t)) + 1}
        inner = {0, int(round(0.25 * t)), int(round(0.5 * t)), int(round(0.75 * t))}
        radius_lists.append([r for r in near_cone | inner if r >= 0])
    sup = _sup_on_sets(profile, times, radius_lists, profile.dim, quad)
    keep = sup > 1e-290
    if keep.sum() < 5:
        raise FitError("sup samples underflow: not enough points to fit")
    logt = np.log1p(times[keep])
    logy = np.log(sup[keep])
    design = np.column_stack([np.ones_like(logt), logt])
    coef, *_ = np.linalg.lstsq(design, logy, rcond=None)
    power = float(coef[1])
    amplitude = float(np.exp(coef[0]))
    return power, amplitude, times[keep], sup[keep]


@dataclass(frozen=True)
class IntegrabilityReport:
    t_max: float
    partial_integral: float
    tail_estimate: float
    tail_power: float
    passed: bool

    @property
    def total(self):
        return self.partial_integral + self.tail_estimate

    def to_dict(self):
        return {
            "t_max": self.t_max,
            "partial_integral": self.partial_integral,
            "tail_estimate": self.tail_estimate,
            "tail_power": self.tail_power,
            "total": self.total,
            "passed": self.passed,
        }


def check_time_integrability(profile, t_max, quad=DEFAULT_QUAD, n_t=24):
    """Integrate sup_x |psi(x, t)| on [0, t_max] and estimate the tail.

    The tail beyond t_max uses the fitted power law of `fit_sup_power`
    on the upper part of the window; it is finite when the power is
    below -1.
    """
    head_times = np.linspace(0.0, 5.0, 9)
    tail_times = np.geomspace(5.0, t_max, n_t)[1:]
    times = np.concatenate([head_times, tail_times])
    radius_lists = []
    for t in times:
        radii = {0, int(round(0.5 * t)), int(round(0.75 * t)),
                 int(math.floor(t)), int(math.ceil(t)) + 1}
        radius_lists.append([r for r in radii if r >= 0])
    sup = _sup_on_sets(profile, times, radius_lists, profile.dim, quad)
    partial = float(np.trapezoid(sup, times))
    power, amplitude, _, _ = fit_sup_power(profile, max(5.0, t_max / 8.0), t_max, quad)
    if power < -1.0:
        tail = amplitude * (1.0 + t_max) ** (power + 1.0) / (-(power + 1.0))
    else:
        tail = math.inf
    return IntegrabilityReport(
        t_max=t_max, partial_integral=partial, tail_estimate=float(tail),
        tail_power=power, passed=bool(math.isfinite(tail)),
    )


def lamb_shift(profile, spin, quad=DEFAULT_QUAD):
    """Bath-induced level shifts, reduced to one real number per channel.

    For each ordered level pair the half-line integral
    Im int_0^inf psi(0, t) e^{i a t} dt is combined with the squared
    coupling amplitudes into per-level shifts; the channel value is the
    difference of the two level shifts.  The zero channel vanishes
    identically and only ever enters commutators.
    """
    levels = np.asarray(spin.levels)
    w = spin.w
    needed = sorted({float(e - f) for e in levels for f in levels})
    origin = np.zeros(profile.dim)
    im_integral = {a: half_line_fourier(profile, origin, a, quad).imag for a in needed}
    per_level = np.zeros(len(levels))
    for fi in range(len(levels)):
        for ei in range(len(levels)):
            amp = abs(w[fi, ei]) ** 2
            if amp > 0:
                per_level[fi] += amp * im_integral[float(levels[ei] - levels[fi])]
    shifts = {0.0: 0.0}
    for ei in range(len(levels)):
        for fi in range(len(levels)):
            if ei != fi:
                a = float(levels[ei] - levels[fi])
                shifts[a] = float(per_level[ei] - per_level[fi])
    return shifts
