from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modular_sysid.closed_form import (ProbeMeasurements, RecoveredSystem, counterexample_pair, forward_F,
                                       injectivity_probe, measure, recover, relative_error, truth_values)
from modular_sysid.composition import two_module_truth
from modular_sysid.errors import (DegenerateProbeError, InvalidPairError, InvalidParameterError, ShapeError,
                                  SingularityError)

PROBES = ((0.25, 0.75), (0.25, 0.75))


def rational_F(theta, f1, f2):
    """Exact image of the eight-output map in rational arithmetic."""
    th1, th2 = map(Fraction, theta)
    f1 = [Fraction(v) for v in f1]
    f2 = [Fraction(v) for v in f2]
    out = []
    for j in range(2):
        d1 = 1 + f1[j] + f2[2]
        d2 = 1 + f1[2] + f2[j]
        out += [th1 * f1[j] / d1, th2 * f2[2] / d1, th1 * f1[2] / d2, th2 * f2[j] / d2]
    return [float(v) for v in out]


admissible = st.floats(0.05, 2.0)


# ---------------------------------------------------------------- forward map

def test_forward_symmetric_case():
    x = RecoveredSystem(theta=(1.0, 1.0), f1_at=(1.0, 1.0, 1.0), f2_at=(1.0, 1.0, 1.0))
    assert np.allclose(forward_F(x).g_values, 1 / 3, rtol=1e-15)


def test_forward_matches_composition_module():
    truth = two_module_truth()
    x = truth_values(truth, PROBES)
    assert np.allclose(forward_F(x, PROBES).g_values, measure(truth, PROBES).g_values, rtol=1e-14, atol=0)


def test_forward_zero_theta2_zeroes_second_outputs():
    x = RecoveredSystem(theta=(0.7, 0.0), f1_at=(0.3, 0.6, 0.5), f2_at=(0.2, 0.4, 0.3))
    g = np.asarray(forward_F(x).g_values)
    assert np.all(g[[1, 3, 5, 7]] == 0) and np.all(g[[0, 2, 4, 6]] > 0)


def test_forward_matches_rational_oracle():
    x = RecoveredSystem(theta=(0.703, 0.204), f1_at=(0.2, 0.45, 0.39), f2_at=(0.3, 0.21, 0.25))
    assert np.allclose(forward_F(x).g_values, rational_F(x.theta, x.f1_at, x.f2_at), rtol=1e-15, atol=0)


def test_forward_singularity():
    x = RecoveredSystem(theta=(1.0, 1.0), f1_at=(-1.5, 0.2, 0.1), f2_at=(0.3, 0.2, 0.5))
    with pytest.raises(SingularityError):
        forward_F(x)


# ---------------------------------------------------------------- recovery

def test_recover_ground_truth_roundtrip():
    truth = two_module_truth()
    x = truth_values(truth, PROBES)
    rec = recover(measure(truth, PROBES))
    assert rec.theta == pytest.approx((0.703, 0.204), rel=1e-9)
    assert relative_error(rec.as_vector(), x.as_vector()) < 1e-9


def test_recover_unit_system():
    x = RecoveredSystem(theta=(1.0, 1.0), f1_at=(0.5, 2.0, 1.0), f2_at=(0.25, 1.5, 1.0))
    rec = recover(forward_F(x))
    assert relative_error(rec.as_vector(), x.as_vector()) < 1e-12


def test_recover_from_exact_rational_data():
    x = RecoveredSystem(theta=(1.3, 0.4), f1_at=(0.1, 1.7, 0.8), f2_at=(0.9, 0.06, 1.1))
    m = ProbeMeasurements(((0.1, 0.9), (0.2, 0.6)), rational_F(x.theta, x.f1_at, x.f2_at))
    assert relative_error(recover(m).as_vector(), x.as_vector()) < 1e-12


def test_recover_degenerate_probe_reports_module():
    x = RecoveredSystem(theta=(1.0, 2.0), f1_at=(0.5, 0.5, 0.7), f2_at=(0.2, 0.9, 0.4))
    with pytest.raises(DegenerateProbeError) as err:
        recover(forward_F(x))
    assert err.value.module == 1
    y = RecoveredSystem(theta=(1.0, 2.0), f1_at=(0.2, 0.9, 0.7), f2_at=(0.6, 0.6, 0.4))
    with pytest.raises(DegenerateProbeError) as err:
        recover(forward_F(y))
    assert err.value.module == 2


def test_recover_zero_cross_output():
    g = (0.1, 0.0, 0.1, 0.1, 0.2, 0.1, 0.1, 0.1)
    with pytest.raises(SingularityError):
        recover(ProbeMeasurements(PROBES, g))


def test_measurements_validation():
    with pytest.raises(ShapeError):
        ProbeMeasurements(PROBES, (0.1,) * 7)
    with pytest.raises(InvalidParameterError):
        ProbeMeasurements(PROBES, (0.1,) * 7 + (np.nan,))
    with pytest.raises(InvalidParameterError):
        ProbeMeasurements(((0.5, 0.5), (0.1, 0.2)), (0.1,) * 8)


def test_measurements_dict_roundtrip():
    m = measure(two_module_truth(), PROBES)
    assert ProbeMeasurements.from_dict(m.to_dict()) == m


@settings(max_examples=300, deadline=None)
@given(th=st.tuples(st.floats(0.1, 2.0), st.floats(0.1, 2.0)),
       f1=st.tuples(admissible, admissible, admissible), f2=st.tuples(admissible, admissible, admissible))
def test_recover_inverts_forward(th, f1, f2):
    if abs(f1[0] - f1[1]) < 0.05 or abs(f2[0] - f2[1]) < 0.05:
        return
    x = RecoveredSystem(theta=th, f1_at=f1, f2_at=f2)
    assert relative_error(recover(forward_F(x)).as_vector(), x.as_vector()) < 1e-9


def test_injectivity_probe_finds_no_violation():
    report = injectivity_probe(1000, seed=0)
    assert report["violations"] == 0
    assert report["max_roundtrip_error"] < 1e-9


def test_forward_equal_inputs_equal_outputs():
    x = RecoveredSystem(theta=(0.3, 0.8), f1_at=(0.2, 0.4, 0.6), f2_at=(0.1, 0.9, 0.5))
    assert forward_F(x).g_values == forward_F(RecoveredSystem.from_vector(x.as_vector())).g_values


# ---------------------------------------------------------------- non-identifiability

def _rational(u):
    u = np.asarray(u, dtype=np.float64)
    return u / (1 + u)


def test_counterexample_hand_values():
    f_hat = counterexample_pair(5.0, 2.0, _rational)
    assert f_hat(1.0) == pytest.approx(5.0, rel=1e-14)
    assert 2.0 * 5.0 / 6.0 == pytest.approx(5.0 / 3.0)
    assert 5.0 * 0.5 / 1.5 == pytest.approx(5.0 / 3.0)


def test_counterexample_outputs_agree_functions_differ():
    f_hat = counterexample_pair(5.0, 2.0, _rational)
    u = np.linspace(0, 1, 1000)
    G = 5.0 * _rational(u) / (1 + _rational(u))
    G_hat = 2.0 * f_hat(u) / (1 + f_hat(u))
    assert np.max(np.abs(G - G_hat)) <= 1e-12
    assert np.max(np.abs(f_hat(u) - _rational(u))) > 0.1


def test_counterexample_identity_and_zero():
    f_hat = counterexample_pair(1.7, 1.7, _rational)
    u = np.linspace(0, 1, 11)
    assert np.allclose(f_hat(u), _rational(u), rtol=1e-15)
    zero = counterexample_pair(5.0, 2.0, lambda u: np.zeros_like(np.asarray(u, dtype=float)))
    assert np.all(zero(u) == 0)


def test_counterexample_invalid_pair():
    # theta_hat much smaller than theta with large f drives the denominator negative
    with pytest.raises(InvalidPairError):
        counterexample_pair(10.0, 1.0, lambda u: 1.0 + 0 * np.asarray(u))
    with pytest.raises(InvalidParameterError):
        counterexample_pair(-1.0, 1.0, _rational)


@settings(max_examples=100, deadline=None)
@given(theta=st.floats(0.2, 5), theta_hat=st.floats(0.2, 5), a=st.floats(0.01, 1))
def test_counterexample_preserves_single_module_output(theta, theta_hat, a):
    f = lambda u: a * np.asarray(u, dtype=float) + 0.1
    try:
        f_hat = counterexample_pair(theta, theta_hat, f)
    except InvalidPairError:
        return
    u = np.linspace(0, 1, 50)
    G = theta * f(u) / (1 + f(u))
    G_hat = theta_hat * f_hat(u) / (1 + f_hat(u))
    assert np.allclose(G, G_hat, rtol=1e-12, atol=1e-14)
