import numpy as np
import pytest

from spme import constitutive as cl


def bisect_resolvent(law, lam, y, tol=1e-10):
    """Independent bracketed bisection oracle for r + lam*law(r) = y."""
    lo, hi = min(0.0, y), max(0.0, y)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid + lam * float(law(mid)) - y > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


# ── built-in laws and validation ─────────────────────────────────────────


def test_make_law_unknown_name():
    with pytest.raises(ValueError):
        cl.make_law("quartic")


def test_cubic_coercivity_constants_hand_check(cubic_law):
    # primitive r^4/4 dominates r^4/8 + r^2/8 - 1 everywhere
    r = np.linspace(-50, 50, 200001)
    gap = cubic_law.primitive(r) - (0.125 * np.abs(r) ** 4 + 0.125 * r**2 - 1.0)
    assert gap.min() >= 0.0


def test_validate_law_passes_builtins(cubic_law, linear_law, gravity_law,
                                      stefan_law):
    for law in (cubic_law, linear_law, gravity_law, stefan_law):
        rep = cl.validate_law(law, samples=500, sample_range=10.0)
        assert rep.passed, f"{law.name}: {rep.failures}"
        assert all(margin >= -1e-12 for margin, _ in rep.margins.values())


def test_validate_law_decreasing_fails_with_witness():
    bad = cl.ConstitutiveLaw(
        "decreasing", lambda r: -r, lambda r: -np.ones_like(r),
        lambda r: -0.5 * r**2, 0.0, 1.0, 0.0, 0.1, 0.1, 1.0, 1.0)
    rep = cl.validate_law(bad)
    assert "monotonicity" in rep.failures
    margin, witness = rep.margins["monotonicity"]
    assert margin < 0
    r, s = witness
    assert (bad.fn(r) - bad.fn(s)) * (r - s) < 0


def test_validate_law_needs_samples(linear_law):
    with pytest.raises(ValueError):
        cl.validate_law(linear_law, samples=10)


# ── scalar resolvent ─────────────────────────────────────────────────────


def test_resolvent_point_values(cubic_law, linear_law):
    assert cl.resolvent_scalar(cubic_law, 1.0, 2.0) == pytest.approx(1.0,
                                                                     abs=1e-12)
    assert cl.resolvent_scalar(linear_law, 0.5, 3.0) == pytest.approx(2.0,
                                                                      abs=1e-14)


def test_resolvent_against_bisection_oracle(cubic_law):
    oracle = bisect_resolvent(cubic_law, 0.1, 1.0)
    got = cl.resolvent_scalar(cubic_law, 0.1, 1.0)
    assert got == pytest.approx(oracle, abs=1e-9)
    assert got == pytest.approx(0.9217, abs=1e-4)


def test_resolvent_identity_all_laws(cubic_law, linear_law, gravity_law,
                                     stefan_law):
    rng = np.random.default_rng(2)
    for law in (cubic_law, linear_law, gravity_law, stefan_law):
        lam = rng.uniform(1e-3, 1.0, 1000)
        r = rng.uniform(-10.0, 10.0, 1000)
        back = cl.resolvent_scalar(law, lam, r + lam * law(r))
        assert np.max(np.abs(back - r)) <= 1e-9


def test_resolvent_monotone_in_data_and_nonexpansive(cubic_law, stefan_law):
    rng = np.random.default_rng(3)
    for law in (cubic_law, stefan_law):
        y = np.sort(rng.uniform(-5, 5, 500))
        r = cl.resolvent_scalar(law, 0.3, y)
        assert np.all(np.diff(r) >= -1e-12)
        y2 = rng.uniform(-5, 5, 500)
        r2 = cl.resolvent_scalar(law, 0.3, y2)
        assert np.all(np.abs(r - r2) <= np.abs(y - y2) + 1e-12)


def test_resolvent_rejects_nonpositive_parameter(linear_law):
    with pytest.raises(ValueError):
        cl.resolvent_scalar(linear_law, 0.0, 1.0)


def test_generic_law_without_closed_form():
    # exp-sinh style monotone law exercises the safeguarded path
    law = cl.ConstitutiveLaw(
        "sinh", np.sinh, np.cosh, lambda r: np.cosh(r) - 1.0,
        1.0, 2.0, 1.0, 0.1, 0.1, 1.0, 3.0)
    rng = np.random.default_rng(4)
    lam = rng.uniform(1e-3, 1.0, 500)
    r = rng.uniform(-5.0, 5.0, 500)
    back = cl.resolvent_scalar(law, lam, r + lam * law(r))
    assert np.max(np.abs(back - r)) <= 1e-9


# ── Yosida and shifted Yosida ────────────────────────────────────────────


def test_yosida_point_values(cubic_law, linear_law, stefan_law):
    assert cl.yosida_scalar(cubic_law, 1.0, 2.0) == pytest.approx(1.0,
                                                                  abs=1e-12)
    assert cl.yosida_scalar(linear_law, 0.5, 3.0) == pytest.approx(2.0,
                                                                   abs=1e-14)
    for law in (cubic_law, linear_law, stefan_law):
        assert cl.yosida_scalar(law, 0.37, 0.0) == pytest.approx(0.0,
                                                                 abs=1e-14)


def test_yosida_two_formulas_agree(cubic_law, gravity_law):
    rng = np.random.default_rng(5)
    r = rng.uniform(-8, 8, 400)
    for law in (cubic_law, gravity_law):
        for lam in (0.05, 0.5):
            via_gap = cl.yosida_scalar(law, lam, r)
            via_law = law(cl.resolvent_scalar(law, lam, r))
            assert np.max(np.abs(via_gap - via_law)) <= 1e-10


def test_yosida_lipschitz_and_monotone(cubic_law):
    rng = np.random.default_rng(6)
    lam = 0.2
    a = rng.uniform(-5, 5, 500)
    b = rng.uniform(-5, 5, 500)
    ya = cl.yosida_scalar(cubic_law, lam, a)
    yb = cl.yosida_scalar(cubic_law, lam, b)
    assert np.all((ya - yb) * (a - b) >= -1e-12)
    assert np.all(np.abs(ya - yb) <= np.abs(a - b) / lam + 1e-12)


def test_yosida_converges_to_law(cubic_law, linear_law):
    for law, r in ((cubic_law, 1.3), (linear_law, -2.0)):
        gaps = [abs(cl.yosida_scalar(law, lam, r) - float(law(r)))
                for lam in (1e-1, 1e-2, 1e-3)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] <= 1e-2 * max(1.0, abs(float(law(r))))


def test_shifted_yosida_values_and_modulus(cubic_law):
    assert cl.shifted_yosida_scalar(cubic_law, 1.0, 2.0) == pytest.approx(3.0,
                                                                     abs=1e-12)
    assert cl.shifted_yosida_scalar(cubic_law, 0.3, 0.0) == pytest.approx(0.0,
                                                                     abs=1e-14)
    rng = np.random.default_rng(7)
    lam = 0.25
    a = rng.uniform(-6, 6, 500)
    b = rng.uniform(-6, 6, 500)
    fa = cl.shifted_yosida_scalar(cubic_law, lam, a)
    fb = cl.shifted_yosida_scalar(cubic_law, lam, b)
    prod = (fa - fb) * (a - b)
    assert np.all(prod >= lam * (a - b) ** 2 - 1e-12)
    assert np.all(np.abs(fa - fb) <= (lam + 1.0 / lam) * np.abs(a - b) + 1e-12)


def test_shifted_yosida_inverse_roundtrip_and_lipschitz(cubic_law, stefan_law):
    rng = np.random.default_rng(8)
    for law in (cubic_law, stefan_law):
        lam = 0.4
        r = rng.uniform(-10, 10, 1000)
        v = cl.shifted_yosida_scalar(law, lam, r)
        back = cl.shifted_yosida_inverse(law, lam, v)
        assert np.max(np.abs(back - r)) <= 1e-9
        v2 = rng.uniform(-10, 10, 1000)
        r2 = cl.shifted_yosida_inverse(law, lam, v2)
        assert np.all(np.abs(back - r2) <= np.abs(v - v2) / lam + 1e-9)


def test_shifted_yosida_derivative_matches_difference_quotient(gravity_law):
    rng = np.random.default_rng(9)
    r = rng.uniform(-3, 3, 50)
    lam, h = 0.3, 1e-6
    deriv = cl.shifted_yosida_derivative(gravity_law, lam, r)
    quotient = (cl.shifted_yosida_scalar(gravity_law, lam, r + h)
                - cl.shifted_yosida_scalar(gravity_law, lam, r - h)) / (2 * h)
    assert np.max(np.abs(deriv - quotient)) <= 1e-5
