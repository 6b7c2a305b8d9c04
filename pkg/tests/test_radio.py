import numpy as np
import pytest
from hypothesis import given, strategies as st

from loiu import radio
from loiu.radio import Allocation, ChannelGains, RadioParams


def _two_robot_gains(g=1e-9):
    d2d = np.array([[0.0, g], [g, 0.0]])
    return ChannelGains(d2d, np.array([1e-12, 1e-12]))


def test_unit_conversions():
    assert radio.dbm_to_watts(30.0) == pytest.approx(1.0)
    assert radio.dbm_to_watts(46.0) == pytest.approx(39.810717055, rel=1e-9)
    assert radio.db_to_linear(0.0) == 1.0


def test_noise_power_per_rb():
    p = RadioParams.from_table()
    assert p.noise_power == pytest.approx(10 ** (-14.4) * 180e3, rel=1e-12)


def test_sinr_hand_value():
    # signal 1e-9 W, noise 1e-10 W, no interference -> 10
    p = RadioParams(robot_power=1.0, noise_power=1e-10, bs_interference=False)
    alloc = Allocation(np.zeros((2, 2, 4), dtype=np.int8))
    alloc.l[0, 1, 2] = 1
    v = radio.sinr(0, 1, 2, alloc, _two_robot_gains(), p)
    assert abs(v - 10.0) / 10.0 < 1e-9
    m = radio.sinr_matrix(alloc, _two_robot_gains(), p)
    assert abs(m[0, 1] - 10.0) / 10.0 < 1e-9 and np.isnan(m[1, 0])


def test_rate_and_delay_hand_values():
    p = RadioParams()
    assert abs(radio.rate(3.0, p) - 360_000.0) / 360_000.0 < 1e-12
    assert radio.tx_delay(360_000.0, 360_000.0) == 1.0
    assert abs(radio.tx_delay(960.0, 180_000.0) - 960 / 180_000) < 1e-15
    assert radio.tx_delay(960.0, 0.0) == np.inf


def test_success_threshold_inclusive():
    p = RadioParams()
    assert radio.success(1.0, p) == 1
    assert radio.success(0.999999, p) == 0


def test_update_delay_convention():
    assert radio.update_delay([0.001, 0.004], 0.01) == 0.004
    assert radio.update_delay([], 0.01) == 0.01


def test_pathloss_values():
    assert radio.d2d_gain(10.0) == pytest.approx(1e-4)
    # 1 km: 128.1 dB loss
    assert radio.cellular_gain(1000.0) == pytest.approx(10 ** -12.81)
    with pytest.raises(ValueError):
        radio.d2d_gain(0.0)


def test_shared_rb_lowers_sinr():
    # two pairs close together: sharing an RB must be strictly worse than separate RBs
    pos = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 6.0], [5.0, 6.0]])
    topo = radio.Topology(pos + 50.0, np.array([[1], [0], [3], [2]]), np.full((4, 4), 800.0))
    p = RadioParams.from_table()
    g = ChannelGains.from_topology(topo, p)
    shared = np.zeros((4, 4, 2), dtype=np.int8)
    shared[0, 1, 0] = shared[2, 3, 0] = 1
    split = shared.copy()
    split[2, 3, 0], split[2, 3, 1] = 0, 1
    s_shared = radio.sinr_matrix(Allocation(shared), g, p)
    s_split = radio.sinr_matrix(Allocation(split), g, p)
    assert s_shared[0, 1] < s_split[0, 1] and s_shared[2, 3] < s_split[2, 3]


def test_allocation_constraints():
    l = np.zeros((3, 3, 2), dtype=np.int8)
    l[0, 1, :] = 1
    with pytest.raises(ValueError):
        Allocation(l)
    l = np.zeros((3, 3, 2))
    l[0, 1, 0] = 2
    with pytest.raises(ValueError):
        Allocation(l)
    nu = np.zeros((3, 3), bool)
    l = np.zeros((3, 3, 2), dtype=np.int8)
    l[0, 1, 0] = 1
    with pytest.raises(ValueError):
        Allocation(l, nu)


def test_sharing_set():
    l = np.zeros((3, 3, 2), dtype=np.int8)
    l[0, 1, 1] = l[2, 1, 1] = 1
    a = Allocation(l)
    assert radio.sharing_set(a, 1) == {0, 2}
    assert radio.sharing_set(a, 0) == set()


@given(st.integers(0, 2**31), st.integers(3, 8), st.integers(1, 4))
def test_sinr_matrix_matches_scalar(seed, m, j):
    # the vectorised SINR agrees with the per-pair formula on random schedules
    rng = np.random.default_rng(seed)
    c = min(2, m - 1)
    topo = radio.sample_topology(m, c, rng)
    p = RadioParams.from_table(num_rbs=j)
    g = ChannelGains.from_topology(topo, p)
    l = np.zeros((m, m, j), dtype=np.int8)
    for recv in range(m):
        if rng.random() < 0.7:
            l[topo.collaborators[recv, rng.integers(c)], recv, rng.integers(j)] = 1
    a = Allocation(l, topo.nu)
    mat = radio.sinr_matrix(a, g, p)
    for n, r, rb in a.pairs():
        assert mat[n, r] == pytest.approx(radio.sinr(n, r, rb, a, g, p), rel=1e-12)


@given(st.integers(0, 2**31), st.integers(5, 15))
def test_topology_collaborators_in_range(seed, m):
    rng = np.random.default_rng(seed)
    topo = radio.sample_topology(m, 4, rng)
    topo.validate()
    assert topo.collaborators.shape == (m, 4)
    assert np.all(topo.nu.sum(axis=0) == 4)
    assert np.all(np.linalg.norm(topo.positions, axis=1) <= topo.cell_radius)
    assert np.all((topo.data_sizes[topo.nu] >= 320) & (topo.data_sizes[topo.nu] <= 960))


def test_uniform_placement_infeasible_reported(rng):
    with pytest.raises(radio.InfeasibleTopology):
        radio.sample_topology(5, 4, rng, placement="uniform", max_retries=3, comm_range=1.0)


@given(st.integers(0, 2**31))
def test_mobility_bounded(seed):
    rng = np.random.default_rng(seed)
    topo = radio.sample_topology(6, 2, rng)
    moved = radio.move_robots(topo, 0.2, rng)
    step = np.linalg.norm(moved.positions - topo.positions, axis=1)
    assert np.all(step <= 0.2 + 1e-12)
    assert np.all(np.linalg.norm(moved.positions, axis=1) <= topo.cell_radius + 1e-9)


def test_topology_csv(tmp_path, rng):
    topo = radio.sample_topology(5, 2, rng)
    topo.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "robot,x,y,collaborators" and len(lines) == 6
