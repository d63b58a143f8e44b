import numpy as np
import pytest

from prbsim.channel import (
    HEADER_SIZE,
    ChannelGenConfig,
    ChannelTrace,
    FormatError,
    generate_trace,
    load_trace,
    save_trace,
)
from prbsim.errors import ConfigError, DataError
from prbsim.grid import CellConfig


def iid_config(num_users, seed=0, **kw):
    base = dict(pathloss_db=(0.0,) * num_users, rho_t=0.0, rho_f=0.0, speeds_mps=None, seed=seed)
    base.update(kw)
    return ChannelGenConfig(**base)


class TestGenerator:
    def test_iid_exponential_moments(self):
        cell = CellConfig(num_users=2, num_prbs=10, data_symbols=4)
        g = generate_trace(iid_config(2), cell, 1500).gains.astype(np.float64).ravel()
        n = g.size
        assert n >= 1e5
        # |CN(0,1)|^2 is Exp(1): mean 1, variance 1
        assert abs(g.mean() - 1.0) < 3.0 / np.sqrt(n)
        assert abs(g.var() - 1.0) < 3.0 * np.sqrt(8.0 / n)
        assert g.min() >= 0.0

    def test_high_time_correlation(self):
        cell = CellConfig(num_users=1, num_prbs=2, data_symbols=2)
        trace = generate_trace(iid_config(1, rho_t=0.999), cell, 10_000)
        series = trace.gains[:, 0, 0, 0].astype(np.float64)
        lag1 = np.corrcoef(series[:-1], series[1:])[0, 1]
        assert lag1 >= 0.9

    def test_frequency_correlation(self):
        cell = CellConfig(num_users=1, num_prbs=6, data_symbols=4)
        g = generate_trace(iid_config(1, rho_f=0.9), cell, 2000).gains[:, :, :, 0].astype(np.float64)
        adj = np.corrcoef(g[..., 0].ravel(), g[..., 1].ravel())[0, 1]
        # power correlation of a complex Gaussian pair is rho^2
        np.testing.assert_allclose(adj, 0.81, atol=0.05)

    def test_deterministic(self):
        cell = CellConfig(num_users=2, num_prbs=5, data_symbols=3)
        cfg = ChannelGenConfig(pathloss_db=(-100.0, -110.0), speeds_mps=(3.0, 30.0), seed=7)
        a = generate_trace(cfg, cell, 300)
        b = generate_trace(cfg, cell, 300)
        assert a.gains.tobytes() == b.gains.tobytes()
        c = generate_trace(ChannelGenConfig(pathloss_db=(-100.0, -110.0), speeds_mps=(3.0, 30.0), seed=8), cell, 300)
        assert a.gains.tobytes() != c.gains.tobytes()

    def test_stationary_mean_matches_pathloss(self):
        cell = CellConfig(num_users=2, num_prbs=8, data_symbols=4)
        cfg = ChannelGenConfig(pathloss_db=(-3.0, -10.0), speeds_mps=(10.0, 50.0), rho_f=0.5, seed=3)
        g = generate_trace(cfg, cell, 4000).gains.astype(np.float64)
        means = g.mean(axis=(0, 1, 2))
        np.testing.assert_allclose(means, 10.0 ** (np.array([-3.0, -10.0]) / 10.0), rtol=0.1)

    def test_shadowing_keeps_mean(self):
        cell = CellConfig(num_users=1, num_prbs=4, data_symbols=2)
        cfg = iid_config(1, shadowing_std_db=4.0, shadowing_corr=0.5)
        g = generate_trace(cfg, cell, 20_000).gains.astype(np.float64)
        np.testing.assert_allclose(g.mean(), 1.0, rtol=0.06)

    def test_speed_maps_to_correlation(self):
        cfg = ChannelGenConfig(speeds_mps=(0.0, 100.0), pathloss_db=(0.0, 0.0), v_ref_mps=100.0)
        np.testing.assert_allclose(cfg.time_correlation(2), [1.0, np.exp(-1.0)])

    @pytest.mark.parametrize(
        "kw",
        [
            {"rho_f": 1.0},
            {"rho_t": -0.1, "speeds_mps": None},
            {"rho_t": 1.0, "speeds_mps": None},
            {"shadowing_std_db": -1.0},
            {"speeds_mps": (-1.0, 0.0, 0.0, 0.0)},
            {"pathloss_db": (float("nan"), 0.0, 0.0, 0.0)},
        ],
    )
    def test_invalid_config(self, kw):
        with pytest.raises(ConfigError):
            ChannelGenConfig(**kw)

    def test_zero_speed_rejected_at_generation(self):
        cell = CellConfig(num_users=1, num_prbs=2, data_symbols=2)
        with pytest.raises(ConfigError):
            generate_trace(ChannelGenConfig(pathloss_db=(0.0,), speeds_mps=(0.0,)), cell, 5)

    def test_user_count_mismatch(self):
        with pytest.raises(ConfigError):
            generate_trace(ChannelGenConfig(), CellConfig(num_users=3), 2)

    def test_num_slots_positive(self, cell):
        with pytest.raises(ConfigError):
            generate_trace(ChannelGenConfig(), cell, 0)


class TestTraceFile:
    @pytest.fixture
    def saved(self, tmp_path, cell):
        trace = generate_trace(ChannelGenConfig(seed=5), cell, 100)
        path = tmp_path / "t.bin"
        save_trace(trace, path)
        return trace, path

    def test_round_trip(self, saved, tmp_path):
        trace, path = saved
        assert trace.dims == (4, 51, 12) and trace.num_slots == 100
        back = load_trace(path)
        assert back == trace
        assert back.params == trace.params
        save_trace(back, tmp_path / "again.bin")
        assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()

    def test_header_layout(self, saved):
        _, path = saved
        raw = path.read_bytes()
        assert raw[:8] == b"PRBTRACE"
        assert len(raw) == HEADER_SIZE + 4 * 100 * 12 * 51 * 4

    def test_truncated(self, saved):
        _, path = saved
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError):
            load_trace(path)

    def test_short_header(self, saved):
        _, path = saved
        path.write_bytes(path.read_bytes()[:20])
        with pytest.raises(FormatError) as info:
            load_trace(path)
        assert info.value.offset == 20

    def test_header_dims_disagree(self, saved):
        _, path = saved
        raw = bytearray(path.read_bytes())
        raw[12] += 1  # num_users
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            load_trace(path)

    def test_bad_magic(self, saved):
        _, path = saved
        raw = bytearray(path.read_bytes())
        raw[0:8] = b"NOTATRCE"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as info:
            load_trace(path)
        assert info.value.offset == 0

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_trace(tmp_path / "absent.bin")

    def test_dtype_enforced(self):
        with pytest.raises(ValueError):
            ChannelTrace(gains=np.zeros((1, 1, 1, 1)), seed=0, params_hash=b"\0" * 16)
