import numpy as np
import pytest
from hypothesis import given, strategies as st

from loiu import neural as nn

ACTOR = nn.DenseNetSpec((16, 128, 256, 9), "simplex", (5, 4))
CRITIC = nn.DenseNetSpec((5 * 16 + 5 * 9, 256, 128, 64, 1), "linear")


def fd_check(spec, params, x, w, coords, h=1e-6):
    """Central differences of sum(w * f(x)) for selected parameter coordinates, in float64."""
    out, cache = nn.forward(spec, params, x)
    grads = nn.backward(spec, params, cache, w)
    worst = 0.0
    for (arr_idx, flat) in coords:
        a = params.arrays()[arr_idx]
        old = a.flat[flat]
        a.flat[flat] = old + h
        fp = float(np.sum(w * nn.forward(spec, params, x)[0]))
        a.flat[flat] = old - h
        fm = float(np.sum(w * nn.forward(spec, params, x)[0]))
        a.flat[flat] = old
        num = (fp - fm) / (2 * h)
        ana = grads.params.arrays()[arr_idx].flat[flat]
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
    return worst


def _coords(params, rng, k):
    arrs = params.arrays()
    out = []
    for _ in range(k):
        i = int(rng.integers(len(arrs)))
        out.append((i, int(rng.integers(arrs[i].size))))
    return out


@pytest.mark.parametrize("spec", [ACTOR, CRITIC], ids=["actor", "critic"])
def test_backprop_matches_finite_differences(spec, rng):
    params = nn.init_params(spec, rng)
    x = rng.standard_normal((3, spec.layer_widths[0]))
    w = rng.standard_normal((3, spec.layer_widths[-1]))
    assert fd_check(spec, params, x, w, _coords(params, rng, 20)) < 1e-4


def test_input_gradient_matches_finite_differences(rng):
    params = nn.init_params(CRITIC, rng)
    x = rng.standard_normal(CRITIC.layer_widths[0])
    _, cache = nn.forward(CRITIC, params, x)
    g = nn.backward(CRITIC, params, cache, np.ones(1)).input
    h = 1e-6
    for i in rng.choice(x.size, 10, replace=False):
        e = np.zeros_like(x)
        e[i] = h
        num = (nn.forward(CRITIC, params, x + e)[0][0] - nn.forward(CRITIC, params, x - e)[0][0]) / (2 * h)
        assert abs(num - g[i]) <= 1e-4 * max(abs(num), 1e-6)


def test_simplex_heads_sum_to_one(rng):
    params = nn.init_params(ACTOR, rng)
    p, _ = nn.forward(ACTOR, params, rng.standard_normal((7, 16)) * 10)
    assert np.allclose(p[:, :5].sum(1), 1) and np.allclose(p[:, 5:].sum(1), 1)
    assert np.all(p >= 0)


def test_spec_validation():
    with pytest.raises(ValueError):
        nn.DenseNetSpec((3, 4))
    with pytest.raises(ValueError):
        nn.DenseNetSpec((3, 4, 5), "simplex", (2, 2))
    with pytest.raises(ValueError):
        nn.DenseNetSpec((3, 4, 5), "tanh")


def test_stale_cache_rejected(rng):
    spec = nn.DenseNetSpec((3, 4, 2))
    p = nn.init_params(spec, rng)
    _, cache = nn.forward(spec, p, np.ones(3))
    nn.soft_update(p, p.copy(), 0.5)
    with pytest.raises(ValueError, match="stale"):
        nn.backward(spec, p, cache, np.ones(2))


def test_soft_update_rule(rng):
    spec = nn.DenseNetSpec((3, 4, 2))
    t, o = nn.init_params(spec, rng), nn.init_params(spec, rng)
    before = [a.copy() for a in t.arrays()]
    nn.soft_update(t, o, 0.001)
    for b, a, on in zip(before, t.arrays(), o.arrays()):
        assert np.allclose(a, 0.001 * on + 0.999 * b)
    nn.soft_update(t, o, 1.0)
    assert all(np.array_equal(a, b) for a, b in zip(t.arrays(), o.arrays()))
    with pytest.raises(ValueError):
        nn.soft_update(t, o, 0.0)


def test_optimizer_rejects_non_finite(rng):
    spec = nn.DenseNetSpec((3, 4, 2))
    p = nn.init_params(spec, rng)
    g = nn.zeros_like(p)
    g.biases[1][0] = np.nan
    with pytest.raises(nn.NonFiniteGradient, match="bias"):
        nn.optimizer_step(p, g, nn.OptimizerState.for_params(p))


def test_zero_gradient_leaves_params(rng):
    spec = nn.DenseNetSpec((3, 4, 2))
    p = nn.init_params(spec, rng)
    before = [a.copy() for a in p.arrays()]
    nn.optimizer_step(p, nn.zeros_like(p), nn.OptimizerState.for_params(p))
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), before))


def test_sgd_step_is_lr_times_gradient(rng):
    spec = nn.DenseNetSpec((3, 4, 2))
    p = nn.init_params(spec, rng)
    g = nn.init_params(spec, rng)
    before = [a.copy() for a in p.arrays()]
    nn.optimizer_step(p, g, nn.OptimizerState.for_params(p, method="sgd", learning_rate=0.1))
    assert all(np.allclose(a, b - 0.1 * d) for a, b, d in zip(p.arrays(), before, g.arrays()))


def test_checkpoint_roundtrip(tmp_path, rng):
    p = nn.init_params(ACTOR, rng)
    nn.save_params(tmp_path / "a.npz", ACTOR, p, robot=3)
    q = nn.load_params(tmp_path / "a.npz", ACTOR)
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))
    with pytest.raises(ValueError, match="different network"):
        nn.load_params(tmp_path / "a.npz", nn.DenseNetSpec((16, 128, 256, 9), "simplex", (4, 5)))


def test_gumbel_uniform_on_equal_logits(rng):
    n = 100_000
    hard, _ = nn.gumbel_softmax_sample(np.zeros((n, 4)), 1.0, rng, hard=True)
    freq = hard.sum(axis=0) / n
    assert np.all(np.abs(freq - 0.25) < 3 * np.sqrt(0.25 * 0.75 / n) * 1.5)


def test_gumbel_argmax_follows_softmax(rng):
    logits = np.log(np.array([0.1, 0.2, 0.7]))
    hard, _ = nn.gumbel_softmax_sample(np.tile(logits, (100_000, 1)), 1.0, rng, hard=True)
    assert np.allclose(hard.mean(axis=0), [0.1, 0.2, 0.7], atol=0.01)


@given(st.integers(0, 2**31), st.floats(0.2, 5.0))
def test_gumbel_backward_matches_fd(seed, temp):
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((1, 6))
    heads = (4, 2)
    g_rng = np.random.default_rng(seed + 1)
    _, soft = nn.gumbel_softmax_sample(logits, temp, g_rng, heads)
    w = rng.standard_normal((1, 6))
    ana = nn.gumbel_softmax_backward(soft, w, temp, heads)
    h = 1e-6
    for i in range(6):
        e = np.zeros_like(logits)
        e[0, i] = h
        fp = np.sum(w * nn.gumbel_softmax_sample(logits + e, temp, np.random.default_rng(seed + 1), heads)[1])
        fm = np.sum(w * nn.gumbel_softmax_sample(logits - e, temp, np.random.default_rng(seed + 1), heads)[1])
        assert abs((fp - fm) / (2 * h) - ana[0, i]) < 1e-5 * max(1.0, abs(ana[0, i]))


def test_one_hot_and_argmax_heads():
    p = np.array([[0.1, 0.6, 0.3, 0.8, 0.2]])
    assert np.array_equal(nn.one_hot_heads(p, (3, 2)), [[0, 1, 0, 1, 0]])
    assert [int(a[0]) for a in nn.argmax_heads(p, (3, 2))] == [1, 0]
