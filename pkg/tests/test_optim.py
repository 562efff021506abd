import numpy as np
import pytest

from neurcam.errors import StateError
from neurcam.optim import AdamState, PlateauScheduler, adam_step, plateau_step
from neurcam.tensor import GradTape


def _setup(shape=(3,), lr=0.01):
    params = {"w": np.ones(shape)}
    state = AdamState.for_params(params, lr=lr)
    tape = GradTape({"w": shape})
    return params, state, tape


def test_zero_gradient_leaves_params_unchanged():
    params, state, tape = _setup()
    before = params["w"].copy()
    adam_step(state, params, tape)
    assert np.array_equal(params["w"], before)


def test_first_step_matches_hand_recurrence():
    params, state, tape = _setup(lr=0.1)
    g = np.array([0.3, -0.7, 2.0])
    tape.add("w", g)
    adam_step(state, params, tape)
    # by hand: m = (1-b1) g, v = (1-b2) g^2; bias-corrected both equal g, g^2
    expected = 1.0 - 0.1 * g / (np.abs(g) + 1e-8)
    assert np.allclose(params["w"], expected, atol=1e-10)


def test_constant_gradient_step_approaches_lr():
    params, state, tape = _setup(shape=(1,), lr=0.05)
    tape.add("w", np.array([0.4]))
    prev = params["w"].copy()
    for _ in range(300):
        prev = params["w"].copy()
        adam_step(state, params, tape)
    assert abs((prev - params["w"])[0]) == pytest.approx(0.05, rel=1e-3)


def test_frozen_parameters_skip_update_and_moments():
    params, state, tape = _setup()
    tape.add("w", np.ones(3))
    adam_step(state, params, tape, frozen={"w"})
    assert np.array_equal(params["w"], np.ones(3))
    assert np.all(state.m["w"] == 0.0)


def test_shape_mismatch_raises():
    params, state, _ = _setup()
    bad = GradTape({"w": (4,)})
    with pytest.raises(StateError):
        adam_step(state, params, bad)


def test_adam_deterministic():
    rng = np.random.default_rng(0)
    grads = [rng.normal(0.0, 1.0, 3) for _ in range(20)]

    def run():
        params, state, _ = _setup()
        for g in grads:
            tape = GradTape({"w": (3,)})
            tape.add("w", g)
            adam_step(state, params, tape)
        return params["w"]

    assert np.array_equal(run(), run())


def test_plateau_constant_when_improving():
    adam = AdamState(lr=0.002)
    sched = PlateauScheduler(patience=100)
    for loss in np.linspace(10.0, 1.0, 300):
        lr = plateau_step(sched, adam, float(loss))
    assert lr == 0.002


def test_plateau_halves_after_patience():
    adam = AdamState(lr=0.002)
    sched = PlateauScheduler(patience=100)
    plateau_step(sched, adam, 1.0)
    for _ in range(100):
        plateau_step(sched, adam, 1.0)
    assert adam.lr == pytest.approx(0.001)


def test_plateau_two_halvings_in_250_flat_epochs():
    adam = AdamState(lr=0.002)
    sched = PlateauScheduler(patience=100)
    plateau_step(sched, adam, 5.0)
    for _ in range(250):
        plateau_step(sched, adam, 5.0)
    assert adam.lr == pytest.approx(0.0005)


def test_plateau_lr_monotone_and_floored():
    adam = AdamState(lr=0.002)
    sched = PlateauScheduler(patience=2, min_lr=1e-6)
    prev = adam.lr
    rng = np.random.default_rng(1)
    for _ in range(200):
        lr = plateau_step(sched, adam, float(rng.uniform(1.0, 2.0) + 1.0))
        assert lr <= prev
        prev = lr
    assert adam.lr >= 1e-6


def test_plateau_rejects_nonfinite_loss():
    adam = AdamState(lr=0.002)
    sched = PlateauScheduler()
    with pytest.raises(StateError):
        plateau_step(sched, adam, float("nan"))
