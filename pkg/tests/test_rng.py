import numpy as np
import pytest

from gfss.numcore import Rng


def test_same_seed_same_stream():
    a = Rng(123)
    b = Rng(123)
    assert a.u64() == b.u64()
    assert np.array_equal(a.uniform((16,)), b.uniform((16,)))


def test_different_seeds_differ():
    xs = Rng(1).uniform((64,))
    ys = Rng(2).uniform((64,))
    assert not np.array_equal(xs, ys)


def test_spawn_is_deterministic_and_independent():
    root = Rng(7)
    child1 = root.spawn("enc", 0)
    child2 = root.spawn("enc", 1)
    again = Rng(7).spawn("enc", 0)
    assert child1.u64() == again.u64()
    assert child1.u64() != child2.u64()


def test_spawn_does_not_advance_parent():
    root = Rng(7)
    before = Rng(7).u64()
    root.spawn("anything")
    assert root.u64() == before


def test_spawn_label_types():
    r = Rng(3)
    assert r.spawn("a", 1).u64() != r.spawn("a", 2).u64()
    assert r.spawn("a").u64() != r.spawn("b").u64()


def test_uniform_range():
    xs = Rng(11).uniform((10000,))
    assert xs.dtype == np.float64
    assert float(xs.min()) >= 0.0
    assert float(xs.max()) < 1.0
    assert abs(float(xs.mean()) - 0.5) < 0.02


def test_normal_moments():
    xs = Rng(5).normal((50000,), mean=2.0, std=3.0)
    assert abs(float(xs.mean()) - 2.0) < 0.05
    assert abs(float(xs.std()) - 3.0) < 0.05


def test_truncated_normal_bounds():
    xs = Rng(9).truncated_normal((20000,), std=0.02)
    assert float(np.abs(xs).max()) <= 2 * 0.02 + 1e-7
    assert abs(float(xs.std()) - 0.02) < 0.004


def test_randint_bounds_and_coverage():
    r = Rng(13)
    draws = {r.randint(6) for _ in range(500)}
    assert draws == {0, 1, 2, 3, 4, 5}
    with pytest.raises(ValueError):
        r.randint(0)


def test_shuffle_is_permutation():
    r = Rng(21)
    seq = list(range(40))
    r.shuffle(seq)
    assert sorted(seq) == list(range(40))
    assert seq != list(range(40))


def test_sample_without_replacement():
    r = Rng(17)
    pop = list(range(30))
    got = r.sample(pop, 10)
    assert len(got) == len(set(got)) == 10
    assert set(got) <= set(pop)
    assert pop == list(range(30))  # population untouched
    with pytest.raises(ValueError):
        r.sample(pop, 31)


def test_scalar_uniform():
    x = Rng(2).uniform()
    assert isinstance(x, float)
    assert 0.0 <= x < 1.0
