from __future__ import annotations

import csv
import math

import numpy as np
import pytest

from adaptid.coeffs import DelayPlant, HeatPlant, LinearEI, Schedule, WavePlant
from adaptid.plants import (
    PlantInstability,
    WaveSim,
    make_plant,
    simulate,
    steady_state_response,
    wave_energy,
    write_trajectory,
)
from adaptid.signals import MultiSine, Sine, Zero

DELAY = DelayPlant(K=1.5, a=0.3, b=1.0, tau=0.1)
HEAT = HeatPlant(theta=5.0, lam=1.5)
WAVE = WavePlant(LinearEI(20.0, 10.0))


def phasor(t: np.ndarray, y: np.ndarray, omega: float) -> complex:
    """Least-squares fit of ``y = Im(c exp(j omega t))``; returns ``c``."""
    A = np.column_stack([np.sin(omega * t), np.cos(omega * t)])
    a, b = np.linalg.lstsq(A, y, rcond=None)[0]
    return complex(a, b)


@pytest.mark.parametrize("plant", [DELAY, HEAT, WAVE], ids=["delay", "heat", "wave"])
def test_zero_input_zero_output(plant):
    t, u, y = simulate(plant, Zero(), t_end=2.0, dt=1e-2, grid_points=50)
    assert np.all(u == 0)
    assert np.all(y == 0)


def test_initial_states_are_zero():
    d = make_plant(DELAY, 1e-3)
    assert d.output() == 0.0
    h = make_plant(HEAT, 1e-2, grid_points=200)
    assert np.all(h.T == 0)
    w = make_plant(WAVE, 1e-3, grid_points=400, signal=Zero())
    assert np.all(w.displacement(Zero()) == 0) and np.all(w.velocity(Zero()) == 0)


@pytest.mark.parametrize(
    "plant, omega, dt, t_end, grid",
    [
        (DELAY, 1.0, 1e-3, 120.0, None),
        (HEAT, 0.1, 1e-2, 130.0, 100),
        (WAVE, 0.5, 1e-3, 60.0, 100),
    ],
    ids=["delay", "heat", "wave"],
)
def test_frequency_response(plant, omega, dt, t_end, grid):
    t, _, y = simulate(plant, Sine(omega), t_end, dt, grid_points=grid)
    last = t >= t_end - 2 * (2 * np.pi / omega)
    got = phasor(t[last], y[last], omega)
    want = complex(steady_state_response(plant, omega))
    assert abs(got - want) <= 1e-3 * abs(want)


def test_delay_output_is_shifted_lag():
    # With tau = 0 and tau = 0.1 the outputs differ only by a delay of 0.1 s.
    sig = Sine(1.0)
    t, _, y0 = simulate(DelayPlant(1.5, 0.3, 1.0, 0.0), sig, 20.0, 1e-3)
    _, _, y1 = simulate(DELAY, sig, 20.0, 1e-3)
    np.testing.assert_allclose(y1[100:], y0[:-100], atol=1e-6)


def test_heat_steady_response_converges_with_grid():
    w = 0.1
    errs = []
    for grid in (50, 100, 200):
        t, _, y = simulate(HEAT, Sine(w), 130.0, 1e-2, grid_points=grid)
        last = t >= 130.0 - 2 * np.pi / w
        errs.append(abs(phasor(t[last], y[last], w) - steady_state_response(HEAT, w)))
    assert errs[0] > errs[1] > errs[2]


def test_heat_schedule_changes_response():
    sched = HeatPlant(theta=Schedule(((0.0, 5.0, 0.0), (1.0, 6.0, 0.0005))), lam=1.5)
    assert sched.params_at(0.5) == (5.0, 1.5)
    assert sched.params_at(10.0) == pytest.approx((6.005, 1.5))
    _, _, ya = simulate(HEAT, Sine(1.0), 5.0, 1e-2, grid_points=50)
    _, _, yb = simulate(sched, Sine(1.0), 5.0, 1e-2, grid_points=50)
    assert np.allclose(ya[:90], yb[:90])
    assert not np.allclose(ya[-10:], yb[-10:])


def test_dc_phase_is_zero():
    for plant in (DELAY, HEAT, WAVE):
        g = complex(steady_state_response(plant, 0.0))
        assert g.real > 0 and abs(g.imag) < 1e-14
    assert complex(steady_state_response(WAVE, 0.0)) == pytest.approx(1.0)


def test_steady_state_response_rejects_negative_frequency():
    with pytest.raises(ValueError):
        steady_state_response(DELAY, -1.0)


def test_wave_free_decay_energy_bound():
    sim = WaveSim(WAVE, dt=1e-3, grid_points=200, signal=Zero())
    xi = np.linspace(0.0, 1.0, sim.v.size)
    sim.v[:] = 0.05 * np.sin(1.5 * np.pi * xi) * xi
    sim.vt[:] = np.cos(0.5 * np.pi * xi)
    h0 = wave_energy(sim)
    assert h0 > 0
    times, energy = [0.0], [h0]
    zero = Zero()
    for k in range(1, 20001):
        sim.step(zero)
        if k % 100 == 0:
            times.append(sim.t)
            energy.append(wave_energy(sim))
    times, energy = np.array(times), np.array(energy)
    assert np.all(energy <= 4 * h0 * np.exp(-0.25 * times))
    assert energy[-1] < 1e-3 * h0


def test_non_finite_state_aborts():
    sim = WaveSim(WAVE, dt=1e-3, grid_points=50, signal=Zero())
    sim.v[3] = np.nan
    with pytest.raises(PlantInstability):
        sim.step(Zero())


def test_make_plant_validation():
    with pytest.raises(ValueError):
        make_plant(DELAY, 0.0)
    with pytest.raises(TypeError):
        make_plant("delay", 1e-3)


def test_trajectory_csv(tmp_path):
    t, u, y = simulate(DELAY, MultiSine(1 / 12, 12), 1.0, 1e-2, decimation=10)
    path = tmp_path / "traj.csv"
    write_trajectory(path, t, u, y)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "u", "y"]
    assert len(rows) == len(t) + 1 == 12
    assert float(rows[-1][0]) == pytest.approx(1.0)
    assert float(rows[1][1]) == 0.0
    assert math.isclose(float(rows[-1][1]), u[-1])
