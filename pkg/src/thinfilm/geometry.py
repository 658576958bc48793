"""Closed plane curves, thickness profiles and curved thin domains.

Sign convention: the curve is traversed counterclockwise, ``nu`` is the
outward unit normal and ``kappa_w`` is the nonzero eigenvalue of the
Weingarten map ``W = -grad_Gamma nu``.  With this convention a circle of
radius R has ``kappa_w = -1/R`` (the opposite sign of the usual "curvature
of a circle is 1/R"), and the area stretch of the offset map
``x = gamma + r nu`` is ``J = 1 - r kappa_w = (R + r)/R``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from shapely.geometry import LinearRing

DIMENSION = 2
M_MIN = 1e-6
_SAMPLES = 2048


class OutOfTubeError(ValueError):
    """Raised when a normal offset leaves the admissible tubular neighbourhood."""


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _dot(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]


class Frame(NamedTuple):
    position: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    kappa_w: np.ndarray
    metric: np.ndarray


class PlaneCurve:
    """Base class for 2*pi-periodic parametrized plane curves.

    Subclasses supply analytic derivatives up to third order through
    :meth:`derivatives`; everything else (frame, curvature and its arclength
    derivative) is derived from them here.
    """

    dimension = DIMENSION
    closed = True

    def derivatives(self, theta):
        """Return ``(gamma, gamma', gamma'', gamma''')`` at ``theta``, each shaped (..., 2)."""
        raise NotImplementedError

    def _check(self):
        theta = np.linspace(0.0, 2 * np.pi, _SAMPLES, endpoint=False)
        m = self.metric(theta)
        if not np.all(np.isfinite(m)) or m.min() < M_MIN:
            raise ValueError(f"degenerate curve {self!r}: min |gamma'| = {m.min():.3e} < {M_MIN}")

    def position(self, theta):
        return self.derivatives(np.asarray(theta, dtype=float))[0]

    def metric(self, theta):
        d1 = self.derivatives(np.asarray(theta, dtype=float))[1]
        return np.hypot(d1[..., 0], d1[..., 1])

    def frame(self, theta) -> Frame:
        d0, d1, d2, _ = self.derivatives(np.asarray(theta, dtype=float))
        m = np.hypot(d1[..., 0], d1[..., 1])
        t = d1 / m[..., None]
        nu = np.stack([t[..., 1], -t[..., 0]], axis=-1)
        # signed curvature k of a ccw curve is positive for a circle; kappa_w = -k
        kappa_w = -_cross(d1, d2) / m**3
        return Frame(d0, t, nu, kappa_w, m)

    def kappa_w(self, theta):
        return self.frame(theta).kappa_w

    def dkappa_w_dtheta(self, theta):
        _, d1, d2, d3 = self.derivatives(np.asarray(theta, dtype=float))
        m2 = _dot(d1, d1)
        m = np.sqrt(m2)
        dk = _cross(d1, d3) / m**3 - 3.0 * _cross(d1, d2) * _dot(d1, d2) / m**5
        return -dk

    def dkappa_w_ds(self, theta):
        return self.dkappa_w_dtheta(theta) / self.metric(theta)

    def length(self, samples: int = _SAMPLES) -> float:
        theta = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
        return float(self.metric(theta).sum() * 2 * np.pi / samples)


@dataclass(frozen=True)
class Circle(PlaneCurve):
    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("circle radius must be positive")

    def derivatives(self, theta):
        c, s = np.cos(theta), np.sin(theta)
        R = self.radius
        e = np.stack([c, s], axis=-1)
        ep = np.stack([-s, c], axis=-1)
        return R * e, R * ep, -R * e, -R * ep

    # closed forms, so that curvature and metric carry no rounding
    def frame(self, theta) -> Frame:
        fr = super().frame(theta)
        shape = np.shape(theta)
        return fr._replace(kappa_w=np.full(shape, -1.0 / self.radius), metric=np.full(shape, self.radius))

    def metric(self, theta):
        return np.full(np.shape(theta), float(self.radius))

    def dkappa_w_dtheta(self, theta):
        return np.zeros(np.shape(theta))


@dataclass(frozen=True)
class Ellipse(PlaneCurve):
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("ellipse semi-axes must be positive")

    def derivatives(self, theta):
        c, s = np.cos(theta), np.sin(theta)
        a, b = self.a, self.b
        return (
            np.stack([a * c, b * s], axis=-1),
            np.stack([-a * s, b * c], axis=-1),
            np.stack([-a * c, -b * s], axis=-1),
            np.stack([a * s, -b * c], axis=-1),
        )


@dataclass(frozen=True)
class FourierCurve(PlaneCurve):
    """Star-shaped curve ``rho(theta) (cos theta, sin theta)``.

    ``rho = a0 + sum_k a_k cos(k theta) + b_k sin(k theta)``; ``coefficients``
    is the flat list ``[a0, a1, b1, a2, b2, ...]``.
    """

    coefficients: tuple = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        theta = np.linspace(0.0, 2 * np.pi, _SAMPLES, endpoint=False)
        if self.rho(theta, 0).min() <= 0:
            raise ValueError("Fourier curve radius must stay positive")
        self._check()

    def rho(self, theta, order=0):
        theta = np.asarray(theta, dtype=float)
        a = self.coefficients
        out = np.full_like(theta, a[0] if order == 0 else 0.0)
        for k in range(1, len(a) // 2 + 1):
            ak = a[2 * k - 1]
            bk = a[2 * k] if 2 * k < len(a) else 0.0
            # d^n/dtheta^n of cos/sin cycles with period 4
            phase = order * np.pi / 2
            out = out + k**order * (ak * np.cos(k * theta + phase) + bk * np.sin(k * theta + phase))
        return out

    def derivatives(self, theta):
        r0, r1, r2, r3 = (self.rho(theta, n) for n in range(4))
        e = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        ep = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
        d0 = r0[..., None] * e
        d1 = r1[..., None] * e + r0[..., None] * ep
        d2 = (r2 - r0)[..., None] * e + 2 * r1[..., None] * ep
        d3 = (r3 - 3 * r1)[..., None] * e + (3 * r2 - r0)[..., None] * ep
        return d0, d1, d2, d3


@dataclass(frozen=True)
class FlatBand(PlaneCurve):
    """Straight segment of the given length with periodic identification.

    Curvature vanishes identically, so every averaging estimate is exact on
    this fixture.
    """

    band_length: float = 2 * np.pi
    closed = False

    def derivatives(self, theta):
        theta = np.asarray(theta, dtype=float)
        c = self.band_length / (2 * np.pi)
        zero = np.zeros_like(theta)
        d0 = np.stack([c * theta, zero], axis=-1)
        d1 = np.stack([np.full_like(theta, c), zero], axis=-1)
        z = np.zeros_like(d1)
        return d0, d1, z, z.copy()

    def frame(self, theta) -> Frame:
        fr = super().frame(theta)
        # normal points "up" so that the band sits at positive y for r > 0
        return fr._replace(normal=-fr.normal)


def make_curve(family: str, params: Sequence[float]) -> PlaneCurve:
    family = family.lower()
    params = [float(p) for p in params]
    if family == "circle":
        return Circle(*params)
    if family == "ellipse":
        return Ellipse(*params)
    if family in ("fourier", "fouriercurve"):
        return FourierCurve(tuple(params))
    if family in ("flat", "flatband", "flat_band"):
        return FlatBand(*params)
    raise ValueError(f"unknown curve family {family!r}")


@dataclass(frozen=True)
class Harmonic:
    """``c0 + c1 cos(k theta)``."""

    c0: float
    c1: float = 0.0
    k: int = 0

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.c0 + self.c1 * np.cos(self.k * theta)

    def derivative(self, theta):
        theta = np.asarray(theta, dtype=float)
        return -self.c1 * self.k * np.sin(self.k * theta)

    @classmethod
    def parse(cls, value) -> "Harmonic":
        if isinstance(value, Harmonic):
            return value
        if isinstance(value, (int, float)):
            return cls(float(value))
        value = list(value)
        if not 1 <= len(value) <= 3:
            raise ValueError(f"thickness function needs [c0, c1, k], got {value!r}")
        c0 = float(value[0])
        c1 = float(value[1]) if len(value) > 1 else 0.0
        k = int(value[2]) if len(value) > 2 else (1 if c1 else 0)
        return cls(c0, c1, k)


@dataclass(frozen=True)
class ThicknessProfile:
    g0: Harmonic
    g1: Harmonic

    @classmethod
    def of(cls, g0, g1) -> "ThicknessProfile":
        return cls(Harmonic.parse(g0), Harmonic.parse(g1))

    def g(self, theta):
        return self.g1(theta) - self.g0(theta)

    def dg(self, theta):
        return self.g1.derivative(theta) - self.g0.derivative(theta)

    def min_g(self, samples: int = _SAMPLES) -> float:
        theta = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
        return float(self.g(theta).min())

    def sup_abs(self, samples: int = _SAMPLES) -> float:
        theta = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
        return float(max(np.abs(self.g0(theta)).max(), np.abs(self.g1(theta)).max()))


def _offsets_clean(curve: PlaneCurve, r: float, theta) -> bool:
    fr = curve.frame(theta)
    inner = LinearRing(fr.position - r * fr.normal)
    outer = LinearRing(fr.position + r * fr.normal)
    return inner.is_simple and outer.is_simple and not inner.intersects(outer)


def tubular_radius(curve: PlaneCurve, samples: int = 1024) -> float:
    """Computable stand-in for the tubular-neighbourhood radius.

    ``0.9 / sup|kappa_w|`` keeps ``1 - r kappa_w >= 0.1`` on the tube; that
    value is then shrunk by bisection until the inner and outer offset curves
    are simple and disjoint (a sampled proxy for global injectivity).
    """
    theta = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    kmax = float(np.abs(curve.kappa_w(theta)).max())
    delta = 0.9 / kmax if kmax > 0 else math.inf
    if not curve.closed:
        return delta
    if math.isinf(delta):
        delta = curve.length() / 2
    if _offsets_clean(curve, delta, theta):
        return delta
    lo, hi = 0.0, delta
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if _offsets_clean(curve, mid, theta):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class ThinDomain:
    curve: PlaneCurve
    profile: ThicknessProfile
    epsilon: float
    delta: float = field(default=None)

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.delta is None:
            object.__setattr__(self, "delta", tubular_radius(self.curve))

    def offset(self, theta, sigma):
        theta = np.asarray(theta, dtype=float)
        g0 = self.profile.g0(theta)
        return self.epsilon * (g0 + np.asarray(sigma) * (self.profile.g1(theta) - g0))


def curve_frame(curve: PlaneCurve, theta) -> Frame:
    return curve.frame(theta)


def jacobian(domain: ThinDomain, theta, r):
    r = np.asarray(r, dtype=float)
    if np.any(np.abs(r) > domain.delta):
        raise OutOfTubeError(f"|r| = {np.abs(r).max():.4g} exceeds tube radius {domain.delta:.4g}")
    return 1.0 - r * domain.curve.kappa_w(theta)


class MetricTerms(NamedTuple):
    metric: np.ndarray
    J: np.ndarray
    dR_dtheta: np.ndarray
    dR_dsigma: np.ndarray
    area_element: np.ndarray


def fermi_map(domain: ThinDomain, theta, sigma):
    """Map reference coordinates ``(theta, sigma) in [0,2pi) x [0,1]`` into the band.

    Returns ``(x, r, terms)``; ``dx = terms.area_element dtheta dsigma``.
    """
    theta, sigma = np.broadcast_arrays(np.asarray(theta, float), np.asarray(sigma, float))
    if np.any((sigma < 0) | (sigma > 1)):
        raise ValueError("sigma must lie in [0, 1]")
    fr = domain.curve.frame(theta)
    prof, eps = domain.profile, domain.epsilon
    g = prof.g(theta)
    r = domain.offset(theta, sigma)
    J = 1.0 - r * fr.kappa_w
    x = fr.position + r[..., None] * fr.normal
    terms = MetricTerms(
        metric=fr.metric,
        J=J,
        dR_dtheta=eps * (prof.g0.derivative(theta) + sigma * prof.dg(theta)),
        dR_dsigma=eps * g,
        area_element=J * fr.metric * eps * g,
    )
    return x, r, terms


@dataclass
class ValidityReport:
    delta: float
    min_g: float
    min_J: float
    max_J: float
    max_offset: float
    reasons: list

    @property
    def ok(self) -> bool:
        return not self.reasons

    def summary(self) -> str:
        lines = [
            f"delta      {self.delta:.6g}",
            f"min g      {self.min_g:.6g}",
            f"min J      {self.min_J:.6g}",
            f"max J      {self.max_J:.6g}",
            f"eps sup|g| {self.max_offset:.6g}",
            "status     " + ("pass" if self.ok else "FAIL: " + "; ".join(self.reasons)),
        ]
        return "\n".join(lines)


def validate(domain: ThinDomain, samples: int = _SAMPLES) -> ValidityReport:
    theta = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    prof, eps = domain.profile, domain.epsilon
    kappa = domain.curve.kappa_w(theta)
    min_g = float(prof.g(theta).min())
    # J is affine in r, so its extremes over the band sit on the two boundaries
    J0 = 1.0 - eps * prof.g0(theta) * kappa
    J1 = 1.0 - eps * prof.g1(theta) * kappa
    min_J = float(min(J0.min(), J1.min()))
    max_J = float(max(J0.max(), J1.max()))
    max_offset = eps * prof.sup_abs(samples)
    reasons = []
    if min_g <= 0:
        reasons.append(f"thickness g = g1 - g0 not positive (min {min_g:.4g})")
    if min_J <= 0:
        reasons.append(f"offset curves self-intersect: 1 - r kappa_w reaches {min_J:.4g}")
    if not max_offset < domain.delta:
        reasons.append(f"band leaves tubular neighbourhood: eps sup|g_i| = {max_offset:.4g} >= delta = {domain.delta:.4g}")
    return ValidityReport(domain.delta, min_g, min_J, max_J, max_offset, reasons)
