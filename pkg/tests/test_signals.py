from __future__ import annotations

import numpy as np
import pytest

from adaptid.signals import MultiSine, Sine, Zero


def test_multisine_definition():
    sig = MultiSine(omega=0.25, harmonics=4)
    t = 1.7
    assert sig.value(t) == pytest.approx(sum(np.sin(m * 0.25 * t) for m in range(1, 5)))
    assert sig.value(0.0) == 0.0


def test_scalar_and_array_paths_agree():
    sig = MultiSine(1 / 12, 12)
    t = np.linspace(0.0, 30.0, 41)
    for f in (sig.value, sig.d1, sig.d2):
        np.testing.assert_allclose(f(t), [f(float(x)) for x in t], rtol=1e-14, atol=1e-14)


@pytest.mark.parametrize("sig", [MultiSine(0.2, 5), Sine(1.3, 0.7, 0.4)])
def test_derivatives_match_finite_differences(sig):
    t = np.linspace(0.5, 20.0, 50)
    h = 1e-5
    np.testing.assert_allclose(sig.d1(t), (sig.value(t + h) - sig.value(t - h)) / (2 * h), atol=1e-7)
    np.testing.assert_allclose(sig.d2(t), (sig.d1(t + h) - sig.d1(t - h)) / (2 * h), atol=1e-7)


def test_zero_signal():
    z = Zero()
    assert z.value(3.0) == 0.0 and z.d2(1.0) == 0.0
    assert np.all(z.value(np.arange(4.0)) == 0)
