"""Scalar constitutive laws and their resolvent / Yosida machinery.

A law is a continuous nondecreasing function ``fn`` on the reals with
``fn(0) = 0`` together with declared structural constants:

    (fn(r) - fn(s))(r - s) >= c0 (r - s)^2          (monotonicity modulus)
    |fn(r)| <= c1 |r|^m + c2                        (growth)
    primitive(r) >= c3 |r|^(m+1) + c4 r^2 - c5      (coercivity)

The resolvent ``J_lam(y)`` solves ``r + lam*fn(r) = y`` (unique, monotone
in y); the Yosida regularization is ``(r - J_lam(r))/lam = fn(J_lam(r))``
and the shifted Yosida map ``lam*r + yosida(r)`` is the lam-strongly
monotone Lipschitz surrogate used by the vector drift operator.  All
scalar operations accept numpy arrays and broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

__all__ = [
    "ConstitutiveLaw",
    "ValidationReport",
    "make_law",
    "validate_law",
    "resolvent_scalar",
    "yosida_scalar",
    "shifted_yosida_scalar",
    "shifted_yosida_inverse",
    "shifted_yosida_derivative",
]

_RESOLVENT_TOL = 1e-13
_RESOLVENT_MAX_ITER = 200


@dataclass(frozen=True)
class ConstitutiveLaw:
    """A scalar monotone law with declared structural constants.

    ``resolvent_exact``, when present, returns a closed-form root of
    ``r + a*fn(r) = y`` used as a fast starting point; the public
    resolvent always polishes and verifies it.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    primitive: Callable[[np.ndarray], np.ndarray]
    c0: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    m: float
    params: dict = dc_field(default_factory=dict)
    resolvent_exact: Callable | None = None

    def __call__(self, r):
        return self.fn(np.asarray(r, dtype=float))


def _cardano_root(slope, cube, y):
    """Real root of  cube*r^3 + slope*r = y  (cube > 0, slope > 0)."""
    p3 = slope / (3.0 * cube)  # p/3 with r^3 + p r = q
    q = y / cube
    s = np.sqrt(0.25 * q * q + p3**3)
    u = np.cbrt(0.5 * np.abs(q) + s)
    return np.sign(q) * (u - p3 / u)


def _linear_law():
    return ConstitutiveLaw(
        name="linear",
        fn=lambda r: r,
        deriv=lambda r: np.ones_like(r),
        primitive=lambda r: 0.5 * r**2,
        c0=1.0, c1=1.0, c2=0.0, c3=0.25, c4=0.25, c5=0.0, m=1.0,
        resolvent_exact=lambda a, y: y / (1.0 + a),
    )


def _cubic_law():
    return ConstitutiveLaw(
        name="cubic",
        fn=lambda r: r**3,
        deriv=lambda r: 3.0 * r**2,
        primitive=lambda r: 0.25 * r**4,
        c0=0.0, c1=1.0, c2=0.0, c3=0.125, c4=0.125, c5=1.0, m=3.0,
        resolvent_exact=lambda a, y: _cardano_root(1.0, a, y),
    )


def _cubic_plus_linear_law(c0=0.1):
    c0 = float(c0)
    if c0 <= 0:
        raise ValueError("cubic_plus_linear needs a positive linear slope")
    return ConstitutiveLaw(
        name="cubic_plus_linear",
        fn=lambda r: r**3 + c0 * r,
        deriv=lambda r: 3.0 * r**2 + c0,
        primitive=lambda r: 0.25 * r**4 + 0.5 * c0 * r**2,
        c0=c0, c1=1.0 + c0, c2=c0, c3=0.125, c4=0.5 * c0, c5=1.0, m=3.0,
        params={"c0": c0},
        resolvent_exact=lambda a, y: _cardano_root(1.0 + a * c0, a, y),
    )


def _stefan_law():
    # Flat on [-1, 1]: the plateau case with c0 = 0.
    def fn(r):
        return np.sign(r) * np.maximum(np.abs(r) - 1.0, 0.0)

    def deriv(r):
        return np.where(np.abs(r) > 1.0, 1.0, 0.0)

    def primitive(r):
        return 0.5 * np.maximum(np.abs(r) - 1.0, 0.0) ** 2

    def resolvent_exact(a, y):
        y = np.asarray(y, dtype=float)
        out = np.abs(y)
        return np.sign(y) * np.where(out <= 1.0, out, (out + a) / (1.0 + a))

    return ConstitutiveLaw(
        name="stefan",
        fn=fn, deriv=deriv, primitive=primitive,
        c0=0.0, c1=1.0, c2=0.0, c3=0.125, c4=0.125, c5=1.0, m=1.0,
        resolvent_exact=resolvent_exact,
    )


_REGISTRY = {
    "linear": _linear_law,
    "cubic": _cubic_law,
    "cubic_plus_linear": _cubic_plus_linear_law,
    "stefan": _stefan_law,
}


def make_law(name: str, **params) -> ConstitutiveLaw:
    """Instantiate a built-in law by name (linear, cubic, cubic_plus_linear,
    stefan)."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(
            f"unknown law {name!r}; available: {sorted(_REGISTRY)}"
        ) from None
    return factory(**params)


@dataclass
class ValidationReport:
    """Worst margins of the structural inequalities on a sample set.

    ``margins`` maps inequality name -> (worst margin, witness point(s));
    a negative margin means the inequality failed at the witness.
    """

    law_name: str
    margins: dict
    failures: list

    @property
    def passed(self) -> bool:
        return not self.failures


def validate_law(law: ConstitutiveLaw, samples: int = 1000,
                 sample_range: float = 10.0, seed: int = 0) -> ValidationReport:
    """Check the five structural inequalities on a deterministic grid plus
    random points in [-sample_range, sample_range].

    Returns a report listing each violated inequality with its witness;
    violations are reported, not raised.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    rng = np.random.default_rng(seed)
    grid = np.linspace(-sample_range, sample_range, 10_000)
    rand = rng.uniform(-sample_range, sample_range, samples)
    r = np.concatenate([grid, rand])
    s = np.concatenate([grid[::-1], rng.uniform(-sample_range, sample_range, samples)])

    margins = {}
    failures = []

    def record(name, values, witness):
        idx = int(np.argmin(values))
        margins[name] = (float(values[idx]), witness[idx])
        if values[idx] < -1e-12:
            failures.append(name)

    fr, fs = law(r), law(s)
    record("zero_at_origin",
           np.array([-abs(float(law(0.0)))]), np.array([0.0]))
    diff = (fr - fs) * (r - s) - law.c0 * (r - s) ** 2
    record("monotonicity", diff, list(zip(r, s)))
    record("growth", law.c1 * np.abs(r) ** law.m + law.c2 - np.abs(fr), r)
    prim = law.primitive(r)
    record("coercivity",
           prim - (law.c3 * np.abs(r) ** (law.m + 1) + law.c4 * r**2 - law.c5), r)
    record("primitive_bound", r * fr - prim, r)
    return ValidationReport(law.name, margins, failures)


def resolvent_scalar(law: ConstitutiveLaw, lam, y):
    """Solve  r + lam*fn(r) = y  by safeguarded bisection with Newton polish.

    Monotonicity of the law puts the root between 0 and y, so the bracket
    [min(0, y), max(0, y)] always contains it.  Laws with a closed-form
    resolvent short-circuit through it (polished and verified).
    Residuals are driven to 1e-13 * max(1, |y|); arrays broadcast.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("resolvent parameter must be positive")
    y = np.asarray(y, dtype=float)
    scalar_input = y.ndim == 0 and lam.ndim == 0
    lam, y = np.broadcast_arrays(np.atleast_1d(lam), np.atleast_1d(y))
    lam = lam.astype(float, copy=True)
    y = y.astype(float, copy=True)

    if law.resolvent_exact is not None:
        r = np.asarray(law.resolvent_exact(lam, y), dtype=float)
        tol = _RESOLVENT_TOL * np.maximum(1.0, np.abs(y))
        for _ in range(3):
            g = r + lam * law(r) - y
            if np.all(np.abs(g) <= tol):
                break
            r = r - g / (1.0 + lam * law.deriv(r))
        if np.all(np.abs(r + lam * law(r) - y) <= tol):
            return float(r[0]) if scalar_input else r.reshape(np.shape(y))
        # fall through to the safeguarded path on any miss

    lo = np.minimum(0.0, y)
    hi = np.maximum(0.0, y)
    r = y / (1.0 + lam)  # exact for the linear law, decent start otherwise
    tol = _RESOLVENT_TOL * np.maximum(1.0, np.abs(y))

    for _ in range(_RESOLVENT_MAX_ITER):
        g = r + lam * law(r) - y
        done = np.abs(g) <= tol
        if np.all(done):
            break
        pos = g > 0
        hi = np.where(pos & ~done, r, hi)
        lo = np.where(~pos & ~done, r, lo)
        slope = 1.0 + lam * law.deriv(r)
        step = np.where(slope > 0, g / np.where(slope > 0, slope, 1.0), 0.0)
        r_new = r - step
        outside = (r_new <= lo) | (r_new >= hi) | (step == 0)
        r = np.where(done, r, np.where(outside, 0.5 * (lo + hi), r_new))
    else:
        g = r + lam * law(r) - y
        bad = np.abs(g) > tol
        if np.any(bad):  # pragma: no cover - guarded by monotone bracket
            raise RuntimeError(
                f"scalar resolvent stalled: worst residual "
                f"{np.max(np.abs(g[bad])):.3e} at y={y[bad][0]!r}"
            )
    return float(r[0]) if scalar_input else r.reshape(np.shape(y))


def yosida_scalar(law: ConstitutiveLaw, lam, r):
    """Yosida regularization  (r - J_lam(r)) / lam  of the law."""
    r = np.asarray(r, dtype=float)
    j = resolvent_scalar(law, lam, r)
    return (r - j) / lam


def shifted_yosida_scalar(law: ConstitutiveLaw, lam, r):
    """Shifted Yosida map  lam*r + yosida(r): lam-strongly monotone and
    (lam + 1/lam)-Lipschitz."""
    r = np.asarray(r, dtype=float)
    return lam * r + yosida_scalar(law, lam, r)


def shifted_yosida_inverse(law: ConstitutiveLaw, lam, v):
    """Inverse of the shifted Yosida map; (1/lam)-Lipschitz.

    With u = J_lam(r) the map reads  v = lam*u + (1 + lam^2) fn(u), so u
    solves a rescaled resolvent equation and r = u + lam*fn(u).
    """
    v = np.asarray(v, dtype=float)
    u = resolvent_scalar(law, (1.0 + lam**2) / lam, v / lam)
    return u + lam * law(u)


def shifted_yosida_derivative(law: ConstitutiveLaw, lam, r):
    """Pointwise derivative of the shifted Yosida map at r."""
    r = np.asarray(r, dtype=float)
    u = resolvent_scalar(law, lam, r)
    du = law.deriv(np.asarray(u))
    return lam + du / (1.0 + lam * du)
