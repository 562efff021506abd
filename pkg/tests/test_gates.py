import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from neurcam.gates import (
    AnnealSchedule,
    GateBank,
    anneal_step,
    entmax,
    entmax_jvp,
    init_gate_bank,
    softmax_rows,
)
from neurcam.tensor import finite_diff_grad, rel_error


def entmax_grid_oracle(z, alpha=1.5):
    """Iteratively refined grid search over the normalization threshold."""
    z = (alpha - 1.0) * (np.asarray(z, dtype=float) - np.max(z))
    lo, hi = -1.0, 0.0
    for _ in range(4):
        taus = np.linspace(lo, hi, 2001)
        p = np.clip(z[None, :] - taus[:, None], 0.0, None) ** (1.0 / (alpha - 1.0))
        i = int(np.argmin(np.abs(p.sum(axis=1) - 1.0)))
        lo, hi = taus[max(0, i - 1)], taus[min(2000, i + 1)]
    tau = 0.5 * (lo + hi)
    p = np.clip(z - tau, 0.0, None) ** (1.0 / (alpha - 1.0))
    return p / p.sum()


def test_entmax_uniform_on_equal_logits():
    assert np.allclose(entmax(np.zeros(3)), np.full(3, 1 / 3), atol=1e-12)


def test_entmax_saturates_to_exact_onehot():
    assert np.array_equal(entmax(np.array([10.0, 0.0, 0.0])), [1.0, 0.0, 0.0])


def test_entmax_matches_grid_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        z = rng.normal(0.0, 2.0, rng.integers(2, 17))
        assert np.abs(entmax(z) - entmax_grid_oracle(z)).max() < 1e-6


@given(arrays(np.float64, st.integers(2, 12), elements=st.floats(-20, 20)))
@settings(max_examples=100, deadline=None)
def test_entmax_on_simplex(z):
    p = entmax(z)
    assert np.all(p >= 0.0)
    assert abs(p.sum() - 1.0) < 1e-10


def test_entmax_support_shrinks_with_temperature():
    rng = np.random.default_rng(3)
    for _ in range(25):
        z = rng.normal(0.0, 1.0, 8)
        supports = [int(np.count_nonzero(entmax(z / t))) for t in (1.0, 0.5, 0.25, 0.1)]
        assert all(a >= b for a, b in zip(supports, supports[1:]))


def test_entmax_argmax_invariance():
    rng = np.random.default_rng(4)
    for _ in range(25):
        z = rng.normal(0.0, 1.0, 10)
        z[rng.integers(10)] += 1.0  # make the argmax unique
        for t in (2.0, 1.0, 0.3, 0.05):
            assert np.argmax(entmax(z / t)) == np.argmax(z)


def test_entmax_near_one_approaches_softmax():
    rng = np.random.default_rng(5)
    z = rng.normal(0.0, 1.0, (20, 8))
    assert np.abs(entmax(z, alpha=1.001) - softmax_rows(z)).max() < 1e-2


def test_entmax_rejects_alpha_at_most_one():
    with pytest.raises(ValueError):
        entmax(np.zeros(3), alpha=1.0)


def test_jvp_zero_on_onehot():
    p = np.array([1.0, 0.0, 0.0])
    assert np.array_equal(entmax_jvp(p, 1.5, np.array([3.0, -1.0, 2.0])), np.zeros(3))


def test_jvp_matches_finite_differences():
    rng = np.random.default_rng(6)
    worst = 0.0
    for seed in range(20):
        r = np.random.default_rng(seed)
        z = r.normal(0.0, 1.0, 5)
        v = r.normal(0.0, 1.0, 5)
        g = entmax_jvp(entmax(z), 1.5, v)
        fd = finite_diff_grad(lambda th: float(entmax(th) @ v), z)
        worst = max(worst, rel_error(fd, g))
    assert worst < 1e-4


def test_jvp_uniform_case_matches_fd():
    v = np.array([1.0, -2.0, 0.5, 0.5])
    z = np.zeros(4)
    g = entmax_jvp(entmax(z), 1.5, v)
    fd = finite_diff_grad(lambda th: float(entmax(th) @ v), z)
    assert rel_error(fd, g) < 1e-4


def _bank(c=2, p=1, d=5, seed=0):
    return init_gate_bank(c, p, d, np.random.default_rng(seed))


def test_select_single_hard_is_coordinate():
    bank = _bank()
    bank.single_logits[0, :] = 0.0
    bank.single_logits[0, 3] = 2.0
    bank.hard_single = True
    x = np.arange(5.0).reshape(1, -1)
    assert bank.select_single(x)[0, 0] == 3.0


def test_select_single_uniform_logits_is_mean():
    bank = GateBank(np.zeros((1, 4)), np.zeros((0, 2, 4)))
    x = np.array([[1.0, 2.0, 3.0, 6.0]])
    assert bank.select_single(x)[0, 0] == pytest.approx(3.0, abs=1e-12)


def test_select_single_matches_dot_oracle():
    bank = _bank(c=3, p=0)
    rng = np.random.default_rng(1)
    x = rng.normal(0.0, 1.0, (7, 5))
    out = bank.select_single(x)
    for c in range(3):
        probs = entmax(bank.single_logits[c] / bank.temp_single)
        assert np.allclose(out[:, c], x @ probs, atol=1e-12)


def test_select_pair_hard_coordinates():
    bank = _bank(c=0, p=1)
    bank.pair_logits[0, 0, :] = 0.0
    bank.pair_logits[0, 0, 2] = 3.0
    bank.pair_logits[0, 1, :] = 0.0
    bank.pair_logits[0, 1, 4] = 3.0
    bank.hard_pair = True
    x = np.arange(5.0).reshape(1, -1) * 10
    out = bank.select_pair(x)
    assert out[0, 0, 0] == 20.0 and out[0, 0, 1] == 40.0


def test_select_pair_uniform_is_mean():
    bank = GateBank(np.zeros((0, 4)), np.zeros((1, 2, 4)))
    x = np.array([[2.0, 4.0, 6.0, 8.0]])
    out = bank.select_pair(x)
    assert np.allclose(out[0, 0], [5.0, 5.0], atol=1e-12)


def test_select_pair_matches_oracle():
    bank = _bank(c=0, p=2)
    rng = np.random.default_rng(2)
    x = rng.normal(0.0, 1.0, (6, 5))
    out = bank.select_pair(x)
    for p in range(2):
        for q in range(2):
            probs = entmax(bank.pair_logits[p, q] / bank.temp_pair)
            assert np.allclose(out[:, p, q], x @ probs, atol=1e-12)


def test_hard_selection_ignores_non_argmax_entries():
    bank = _bank(c=1, p=0)
    bank.single_logits[0] = [0.1, 5.0, 0.3, -1.0, 0.2]
    bank.hard_single = True
    x = np.random.default_rng(0).normal(0.0, 1.0, (4, 5))
    out1 = bank.select_single(x)
    bank.single_logits[0, [0, 2, 3, 4]] = [9e-3, -7.0, 2.2, 0.0]  # argmax unchanged
    out2 = bank.select_single(x)
    assert np.array_equal(out1, out2)


def test_anneal_noop_before_warmup():
    bank = _bank()
    sched = AnnealSchedule(warmup_epochs=5, temper_epochs_single=10, temper_epochs_pair=10)
    anneal_step(bank, sched, epoch=3)
    assert bank.temp_single == 1.0 and bank.temp_pair == 1.0


def test_anneal_geometric_decay():
    bank = _bank(c=1, p=0)
    sched = AnnealSchedule(warmup_epochs=0, epsilon=0.9)
    for epoch in range(10):
        anneal_step(bank, sched, epoch)
    assert bank.temp_single == pytest.approx(0.9**10, rel=1e-12)


def test_anneal_pair_bank_first():
    bank = _bank(c=1, p=1)
    sched = AnnealSchedule(warmup_epochs=0, epsilon=0.5)
    anneal_step(bank, sched, 0)
    assert bank.temp_pair == 0.5 and bank.temp_single == 1.0


def test_anneal_hard_switch_stops_decay():
    bank = _bank(c=1, p=0)
    bank.single_logits[0] = [50.0, 0.0, 0.0, 0.0, 0.0]  # already saturated
    sched = AnnealSchedule(warmup_epochs=0, epsilon=0.5)
    anneal_step(bank, sched, 0)
    assert bank.hard_single and bank.temp_single == 1.0
    anneal_step(bank, sched, 1)
    assert bank.temp_single == 1.0


def test_anneal_switches_single_after_pair_done():
    bank = _bank(c=1, p=1)
    bank.pair_logits[0, :, 0] = 100.0  # pair gates saturated
    sched = AnnealSchedule(warmup_epochs=0, epsilon=0.5)
    anneal_step(bank, sched, 0)
    assert bank.hard_pair
    assert bank.temp_single == 0.5  # single decay starts the same epoch


def test_epsilon_derived_from_schedule():
    sched = AnnealSchedule(warmup_epochs=0, temper_epochs_single=100, t_final=1e-3)
    eps = sched.eps_single()
    assert eps**100 == pytest.approx(1e-3, rel=1e-9)


def test_hard_switch_is_exact_projection():
    bank = _bank(c=2, p=1)
    bank.force_hard()
    x = np.random.default_rng(0).normal(0.0, 1.0, (3, 5))
    a = bank.select_single(x)
    b = bank.select_single(x)
    assert np.array_equal(a, b)
    idx = np.argmax(bank.single_logits, axis=1)
    assert np.array_equal(a, x[:, idx])
