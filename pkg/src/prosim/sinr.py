"""Instantaneous SINR and forecasts of the SINR after a lookahead interval.

All powers are expressed in normalised units: transmit power and antenna
gains cancel, so a link of length ``d`` contributes ``d ** -alpha`` and the
noise ``N`` is given in the same units.

Future distances are Gaussian; they are truncated to ``x > EPS`` because a
non-positive distance has no received power. Two independent routes give the
probability that the SINR reaches ``beta``:

* :func:`predict_sinr_probability_mc` samples all distances jointly;
* :func:`predict_sinr_probability_quadrature` integrates the densities of
  ``x ** -alpha``, of the interference sum and of the signal/interference
  ratio by adaptive Gauss-Kronrod quadrature (``scipy.integrate.quad``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from prosim import kernels
from prosim.mobility import GaussianSpec, MobilityConfig, VehicleState, distance_distribution

EPS = 0.1  # metres; lower truncation point of every distance law
SUPPORT_SIGMAS = 6.0
MAX_QUAD_INTERFERERS = 3
QUAD_EPSABS = 1e-6
QUAD_EPSREL = 1e-8
QUAD_LIMIT = 200

_SQRT2PI = math.sqrt(2.0 * math.pi)


class UnsupportedDimensionError(ValueError):
    """Raised when a quadrature routine is asked for more than three interferers."""


@dataclass(frozen=True)
class SinrConfig:
    alpha: float = 3.0
    beta: float = 10.0
    noise: float = 0.0
    mc_samples: int = 10_000
    rng_seed: int = 0

    def __post_init__(self):
        if not 2.0 <= self.alpha <= 5.0:
            raise ValueError(f"alpha must lie in [2, 5], got {self.alpha}")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")
        if self.noise < 0.0:
            raise ValueError("noise must be >= 0")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")


@dataclass(frozen=True)
class InterferenceScene:
    """Distance laws seen by one receiver.

    ``weights`` holds an inclusion probability per interferer; ``None`` means
    every interferer is certainly present. ``count_weight`` is the expected
    number of interferers.
    """

    sender_distance: GaussianSpec
    interferer_distances: tuple[GaussianSpec, ...] = ()
    weights: tuple[float, ...] | None = None
    count_weight: float | None = None
    interferer_ids: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "interferer_distances", tuple(self.interferer_distances))
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
            if len(self.weights) != len(self.interferer_distances):
                raise ValueError("weights must match interferer_distances")
            if any(not 0.0 <= w <= 1.0 for w in self.weights):
                raise ValueError("weights must be probabilities")

    @property
    def m(self) -> int:
        return len(self.interferer_distances)


# --- truncated normal distance law ------------------------------------------------


def _ndtr(t: float) -> float:
    return 0.5 * math.erfc(-t / math.sqrt(2.0))


class _DistanceLaw:
    """N(mu, sd^2) restricted to x > EPS and renormalised."""

    __slots__ = ("mu", "sd", "lo", "mass", "a", "b")

    def __init__(self, mu: float, variance: float):
        self.mu = float(mu)
        self.sd = math.sqrt(variance)
        if self.sd == 0.0:
            self.lo, self.mass = 0.0, 1.0
            self.a = self.b = max(self.mu, EPS)
            return
        self.lo = _ndtr((EPS - self.mu) / self.sd)
        self.mass = 1.0 - self.lo
        if self.mass <= 0.0:
            raise ValueError("distance law has no mass above the truncation point")
        self.a = max(EPS, self.mu - SUPPORT_SIGMAS * self.sd)
        self.b = max(self.mu + SUPPORT_SIGMAS * self.sd, self.a + self.sd)

    @classmethod
    def of(cls, spec: GaussianSpec) -> "_DistanceLaw":
        return cls(spec.mean, spec.variance)

    @property
    def point(self) -> bool:
        return self.sd == 0.0

    def pdf(self, x: float) -> float:
        if x <= EPS:
            return 0.0
        t = (x - self.mu) / self.sd
        return math.exp(-0.5 * t * t) / (self.sd * _SQRT2PI * self.mass)

    def cdf(self, x: float) -> float:
        if x <= EPS:
            return 0.0
        if self.point:
            return 1.0 if x >= self.a else 0.0
        return min(1.0, max(0.0, (_ndtr((x - self.mu) / self.sd) - self.lo) / self.mass))

    def power_pdf(self, y: float, alpha: float) -> float:
        """Density of ``x ** -alpha``."""
        if y <= 0.0:
            return 0.0
        x = y ** (-1.0 / alpha)
        return x ** (1.0 + alpha) * self.pdf(x) / alpha

    def power_range(self, alpha: float) -> tuple[float, float]:
        return self.b ** -alpha, self.a ** -alpha

    def power_mode(self, alpha: float) -> float:
        return max(self.mu, self.a) ** -alpha


def pdf_inverse_power(y, mu: float, sigma_sq: float, alpha: float):
    """Density of ``y = x ** -alpha`` for ``x`` truncated-normal ``N(mu, sigma_sq)``, x > EPS.

    Accepts scalars or arrays; zero outside ``(0, EPS ** -alpha)``.
    """
    if sigma_sq <= 0.0:
        raise ValueError("sigma_sq must be positive for a density")
    y = np.asarray(y, dtype=float)
    sd = math.sqrt(sigma_sq)
    mass = 1.0 - float(ndtr((EPS - mu) / sd))
    out = np.zeros_like(y)
    ok = y > 0.0
    x = np.where(ok, y, 1.0) ** (-1.0 / alpha)
    ok &= x > EPS
    t = (x - mu) / sd
    dens = x ** (1.0 + alpha) * np.exp(-0.5 * t * t) / (sd * _SQRT2PI * mass * alpha)
    out[ok] = dens[ok]
    return out if out.ndim else float(out)


# --- interference sum -------------------------------------------------------------


def _quad(func, a: float, b: float, points=(), epsabs: float = QUAD_EPSABS) -> float:
    pts = sorted(p for p in points if a < p < b)
    val, _ = integrate.quad(func, a, b, points=pts or None, epsabs=epsabs,
                            epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    return val


def _power_sum_range(laws: Sequence[_DistanceLaw], alpha: float) -> tuple[float, float]:
    lo = sum(law.power_range(alpha)[0] for law in laws)
    hi = sum(law.power_range(alpha)[1] for law in laws)
    return lo, hi


def _sum_density(t: float, laws: Sequence[_DistanceLaw], alpha: float) -> float:
    """Density at ``t`` of the sum of ``x_i ** -alpha`` (iterated convolution)."""
    if len(laws) == 1:
        return laws[0].power_pdf(t, alpha)
    last, rest = laws[-1], laws[:-1]
    ylo, yhi = last.power_range(alpha)
    rlo, rhi = _power_sum_range(rest, alpha)
    lo = max(ylo, t - rhi)
    hi = min(yhi, t - rlo)
    if not lo < hi:
        return 0.0
    rest_mode = sum(law.power_mode(alpha) for law in rest)
    points = [math.log(last.power_mode(alpha))]
    if t - rest_mode > 0:
        points.append(math.log(t - rest_mode))

    # integrate over v = log(y) of the last term
    def integrand(v: float) -> float:
        y = math.exp(v)
        return _sum_density(t - y, rest, alpha) * last.power_pdf(y, alpha) * y

    return _quad(integrand, math.log(lo), math.log(hi), points, epsabs=QUAD_EPSABS / t)


def _check_dimension(m: int) -> None:
    if m > MAX_QUAD_INTERFERERS:
        raise UnsupportedDimensionError(
            f"{m} interferers exceeds the quadrature limit of {MAX_QUAD_INTERFERERS}; "
            "use predict_sinr_probability_mc")


def _split_laws(specs: Sequence[GaussianSpec], noise: float, alpha: float):
    """Random interferer laws plus a noise shifted by the deterministic ones."""
    laws = []
    for spec in specs:
        law = _DistanceLaw.of(spec)
        if law.point:
            noise += law.a ** -alpha
        else:
            laws.append(law)
    return laws, noise


def pdf_interference_sum(z: float, interferer_specs: Sequence[GaussianSpec], N: float,
                         alpha: float) -> float:
    """Density of ``N + sum(x_i ** -alpha)`` at ``z`` for one to three interferers.

    The noise is a deterministic shift of the sum.
    """
    m = len(interferer_specs)
    if m < 1:
        raise ValueError("need at least one interferer; the noise-only sum is a point mass")
    _check_dimension(m)
    laws, shift = _split_laws(interferer_specs, N, alpha)
    if not laws:
        raise ValueError("all interferers are deterministic; the sum is a point mass")
    t = z - shift
    if t <= 0.0:
        return 0.0
    return _sum_density(t, laws, alpha)


# --- signal to interference ratio --------------------------------------------------


def _resolve_interferers(scene: InterferenceScene) -> list[GaussianSpec]:
    """Interferers used by the quadrature path.

    With inclusion weights the dimension is the expected count rounded to the
    nearest integer, filled with the most likely interferers.
    """
    specs = list(scene.interferer_distances)
    if scene.weights is None:
        return specs
    expected = scene.count_weight if scene.count_weight is not None else sum(scene.weights)
    m = min(len(specs), int(math.floor(expected + 0.5)))
    order = sorted(range(len(specs)), key=lambda i: (-scene.weights[i], i))
    return [specs[i] for i in sorted(order[:m])]


def pdf_sinr_ratio(w: float, scene: InterferenceScene, cfg: SinrConfig) -> float:
    """Density at ``w`` of signal power over (noise + interference power)."""
    if w <= 0.0:
        return 0.0
    alpha = cfg.alpha
    sender = _DistanceLaw.of(scene.sender_distance)
    if sender.point:
        raise ValueError("sender distance must be random for a density")
    specs = _resolve_interferers(scene)
    _check_dimension(len(specs))
    laws, shift = _split_laws(specs, cfg.noise, alpha)
    if not laws:
        if shift <= 0.0:
            raise ValueError("noise-free scene without interferers has no finite SINR")
        return shift * sender.power_pdf(shift * w, alpha)
    slo, shi = _power_sum_range(laws, alpha)
    ymode = sender.power_mode(alpha)
    points = [math.log(sum(law.power_mode(alpha) for law in laws))]
    if ymode / w - shift > 0:
        points.append(math.log(ymode / w - shift))

    # z = shift + e^u
    def integrand(u: float) -> float:
        s = math.exp(u)
        z = shift + s
        return z * sender.power_pdf(w * z, alpha) * _sum_density(s, laws, alpha) * s

    return _quad(integrand, math.log(slo), math.log(shi), points, epsabs=QUAD_EPSABS / w)


def predict_sinr_probability_quadrature(scene: InterferenceScene, cfg: SinrConfig,
                                        method: str = "fubini") -> float:
    """Probability that the SINR after the lookahead is at least ``beta``.

    ``method="fubini"`` integrates the ratio density over ``w < beta`` with the
    inner ``w`` integral done in closed form, leaving one integral against the
    interference-sum density. ``method="ratio"`` integrates
    :func:`pdf_sinr_ratio` numerically; it is slower and used for checking.
    """
    alpha, beta = cfg.alpha, cfg.beta
    sender = _DistanceLaw.of(scene.sender_distance)
    specs = _resolve_interferers(scene)
    _check_dimension(len(specs))
    laws, shift = _split_laws(specs, cfg.noise, alpha)

    def tail(z: float) -> float:
        # P(x0 ** -alpha >= beta * z)
        if z <= 0.0:
            return 1.0
        return sender.cdf((beta * z) ** (-1.0 / alpha))

    if not laws:
        return min(1.0, max(0.0, tail(shift)))
    if method == "ratio":
        if sender.point:
            raise ValueError("ratio method needs a random sender distance")
        ylo, yhi = sender.power_range(alpha)
        slo, shi = _power_sum_range(laws, alpha)
        wlo = ylo / (shift + shi)
        if beta <= wlo:
            return 1.0
        whi = min(beta, yhi / (shift + slo))
        mass = _quad(lambda v: pdf_sinr_ratio(math.exp(v), scene, cfg) * math.exp(v),
                     math.log(wlo), math.log(whi))
        return min(1.0, max(0.0, 1.0 - mass))
    if method != "fubini":
        raise ValueError(f"unknown method {method!r}")

    slo, shi = _power_sum_range(laws, alpha)
    points = [math.log(sum(law.power_mode(alpha) for law in laws))]
    # where the signal tail switches between 0 and 1
    for x in (sender.a, sender.mu, sender.b):
        s = x ** -alpha / beta - shift
        if s > 0:
            points.append(math.log(s))

    def integrand(u: float) -> float:
        s = math.exp(u)
        return _sum_density(s, laws, alpha) * s * tail(shift + s)

    p = _quad(integrand, math.log(slo), math.log(shi), points)
    return min(1.0, max(0.0, p))


# --- Monte Carlo ---------------------------------------------------------------


def mc_probability(sender: GaussianSpec, mus: np.ndarray, variances: np.ndarray,
                   weights: np.ndarray | None, cfg: SinrConfig, rng: np.random.Generator,
                   samples: int) -> tuple[float, float]:
    """Array form of :func:`predict_sinr_probability_mc`."""
    m = len(mus)
    mus = np.ascontiguousarray(mus, dtype=float)
    sds = np.sqrt(np.asarray(variances, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        los = np.where(sds > 0, ndtr((EPS - mus) / np.where(sds > 0, sds, 1.0)), 0.0)
    sd0 = math.sqrt(sender.variance)
    lo0 = _ndtr((EPS - sender.mean) / sd0) if sd0 > 0 else 0.0
    if weights is None:
        present = np.ones((samples, m), dtype=np.uint8)
    else:
        w = np.asarray(weights, dtype=float)
        present = (rng.random((samples, m)) < w).view(np.uint8)
    g0 = rng.standard_normal(samples)
    gi = rng.standard_normal(int(present.sum()))
    count = kernels.mc_sinr_count(float(sender.mean), sd0, lo0, mus, sds, los, g0, present, gi,
                                  cfg.alpha, cfg.beta, cfg.noise, EPS)
    p = count / samples
    return p, math.sqrt(p * (1.0 - p) / samples)


def predict_sinr_probability_mc(scene: InterferenceScene, cfg: SinrConfig,
                                rng: np.random.Generator,
                                samples: int | None = None) -> tuple[float, float]:
    """Sampled probability that the SINR reaches ``beta``, with its standard error.

    Interferers with an inclusion weight below one are present in each sample
    with that probability.
    """
    specs = scene.interferer_distances
    mus = np.array([s.mean for s in specs], dtype=float)
    variances = np.array([s.variance for s in specs], dtype=float)
    weights = None if scene.weights is None else np.asarray(scene.weights, dtype=float)
    return mc_probability(scene.sender_distance, mus, variances, weights, cfg, rng,
                          samples or cfg.mc_samples)


# --- instantaneous --------------------------------------------------------------


def instantaneous_sinr(d_sr: float, interferer_dists: Sequence[float], cfg: SinrConfig) -> float:
    """``d_sr ** -alpha / (N + sum(d_ir ** -alpha))``."""
    if d_sr <= 0.0 or any(d <= 0.0 for d in interferer_dists):
        raise ValueError("distances must be positive")
    interference = cfg.noise + sum(d ** -cfg.alpha for d in interferer_dists)
    signal = d_sr ** -cfg.alpha
    if interference == 0.0:
        return math.inf
    return signal / interference


# --- scene construction -------------------------------------------------------------


def interference_arrays(receiver: VehicleState, px, py, vx, vy, sig, dt: float, R: float,
                        p_cut: float = 0.01, activity: float = 1.0):
    """Distance laws of potential interferers around ``receiver`` as arrays.

    Returns ``(keep, means, variances, weights, expected_count)`` where
    ``keep`` indexes the retained vehicles.
    """
    rvx, rvy = receiver.velocity
    rx, ry = receiver.position
    probs = kernels.link_probabilities(px, py, vx, vy, sig, rx, ry, rvx, rvy, receiver.sigma,
                                       dt, R)
    keep = np.nonzero(probs >= p_cut)[0]
    dx = px[keep] - rx
    dy = py[keep] - ry
    d = np.hypot(dx, dy)
    wx = vx[keep] - rvx
    wy = vy[keep] - rvy
    with np.errstate(invalid="ignore", divide="ignore"):
        radial = np.where(d > 0, (wx * dx + wy * dy) / np.where(d > 0, d, 1.0), np.hypot(wx, wy))
    means = d + radial * dt
    variances = (sig[keep] ** 2 + receiver.sigma ** 2) * dt ** 3
    weights = np.minimum(1.0, activity * probs[keep])
    return keep, means, variances, weights, activity * float(probs.sum())


def effective_interference_scene(receiver: VehicleState, world: Sequence[VehicleState],
                                 sender: VehicleState, dt: float, mobility: MobilityConfig,
                                 p_cut: float = 0.01, activity: float = 1.0) -> InterferenceScene:
    """Interference scene a receiver is expected to see after ``dt``.

    Every vehicle other than sender and receiver may interfere with weight
    ``activity * P(within range after dt)``; those whose link probability is
    below ``p_cut`` are dropped. ``count_weight`` is the expected number of
    interferers over all vehicles.
    """
    others = [v for v in world if v.id not in (sender.id, receiver.id)]
    sender_law = distance_distribution(sender, receiver, dt)
    if not others:
        return InterferenceScene(sender_law, (), (), 0.0, ())
    pos = np.array([o.position for o in others], dtype=float)
    vel = np.array([o.velocity for o in others], dtype=float)
    sig = np.array([o.sigma for o in others], dtype=float)
    keep, means, variances, weights, expected = interference_arrays(
        receiver, np.ascontiguousarray(pos[:, 0]), np.ascontiguousarray(pos[:, 1]),
        np.ascontiguousarray(vel[:, 0]), np.ascontiguousarray(vel[:, 1]), sig, dt,
        mobility.transmission_range, p_cut, activity)
    laws = tuple(GaussianSpec(float(m), float(v)) for m, v in zip(means, variances))
    return InterferenceScene(sender_law, laws, tuple(float(w) for w in weights), expected,
                             tuple(others[k].id for k in keep))
