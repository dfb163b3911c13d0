import math

import numpy as np
import pytest

from proptwin import (
    DEFAULT_RATE_TABLE,
    FadingFit,
    FileFormatError,
    LinkBudget,
    PropagationEngine,
    RadioConfig,
    RateTable,
    SimConfig,
    Trajectory,
    ValidationError,
    goodput_estimate,
    make_stream,
    position_at,
    read_linkrun,
    read_trajectory,
    run,
    select_rate,
    to_cdf_table,
    write_linkrun,
    write_trajectory,
)

ORIGIN = (0.0, 0.0, 0.0)
TABLE1_BUDGET = LinkBudget(tx_power=7.0, tx_gain=-7.0, rx_gain=-7.0)


def table1_config(duration, tick=1.0, seed=0):
    return SimConfig(
        budget=TABLE1_BUDGET,
        bandwidth=20.0,
        noise=RadioConfig(noise_figure=7.0),
        payload=1400,
        duration=duration,
        tick=tick,
        seed=seed,
    )


def sweep_trajectory(d_start=2.07, d_stop=24.09, steps=100):
    waypoints = tuple(
        (float(k), (d_start + (d_stop - d_start) * k / (steps - 1), 0.0, 0.0))
        for k in range(steps)
    )
    return Trajectory(waypoints=waypoints, fixed_pos=ORIGIN)


class TestPositionAt:
    TRAJ = Trajectory(waypoints=((0.0, (0.0, 0.0, 0.0)), (1.0, (5.0, 0.0, 0.0))), fixed_pos=ORIGIN)

    def test_step_semantics(self):
        assert position_at(self.TRAJ, 0.5) == (0.0, 0.0, 0.0)

    def test_boundary_takes_newer_waypoint(self):
        assert position_at(self.TRAJ, 1.0) == (5.0, 0.0, 0.0)

    def test_beyond_last_waypoint_holds(self):
        assert position_at(self.TRAJ, 99.0) == (5.0, 0.0, 0.0)

    def test_before_first_waypoint_rejected(self):
        with pytest.raises(ValueError):
            position_at(self.TRAJ, -0.1)

    def test_non_increasing_times_rejected(self):
        with pytest.raises(ValueError):
            Trajectory(waypoints=((0.0, ORIGIN), (0.0, ORIGIN)), fixed_pos=ORIGIN)


class TestSelectRate:
    def test_below_preamble_cutoff(self):
        assert select_rate(snr=40.0, rx_power_dbm=-95.0) == 0.0

    def test_high_snr_gets_top_rate(self):
        assert select_rate(snr=30.0, rx_power_dbm=-60.0) == 54.0

    def test_below_lowest_threshold(self):
        assert select_rate(snr=5.9, rx_power_dbm=-60.0) == 0.0

    def test_exact_threshold_qualifies(self):
        assert select_rate(snr=6.0, rx_power_dbm=-60.0) == 6.0
        assert select_rate(snr=24.0, rx_power_dbm=-60.0) == 48.0

    def test_bad_table_rejected(self):
        with pytest.raises(ValueError):
            RateTable(entries=((6.0, 6.0), (6.0, 9.0)))
        with pytest.raises(ValueError):
            RateTable(entries=((6.0, 9.0), (8.0, 6.0)))


class TestGoodputEstimate:
    def test_54mbps_1400b_timing(self):
        # hand evaluation: T_data = 20 + 4*ceil(11510/216) = 236 us,
        # T_frame = 34 + 67.5 + 236 + 16 + 28 = 381.5 us, 11200/381.5 Mbit/s
        assert goodput_estimate(54.0, 1400) == pytest.approx(29.36, abs=0.01)
        assert goodput_estimate(54.0, 1400) == pytest.approx(11200.0 / 381.5, abs=1e-9)

    def test_zero_rate(self):
        assert goodput_estimate(0.0, 1400) == 0.0

    def test_strictly_increasing_in_rate(self):
        rates = [6.0, 9.0, 12.0, 18.0, 24.0, 36.0, 48.0, 54.0]
        goodputs = [goodput_estimate(r, 1400) for r in rates]
        assert all(b > a for a, b in zip(goodputs, goodputs[1:]))

    def test_unknown_rate_rejected(self):
        with pytest.raises(ValueError):
            goodput_estimate(11.0, 1400)

    def test_goodput_below_data_efficiency_bound(self):
        for rate in (6.0, 24.0, 54.0):
            n_dbps = {6: 24, 24: 96, 54: 216}[int(rate)]
            t_data = 20.0 + 4.0 * math.ceil((16 + 6 + 8 * (1400 + 36)) / n_dbps)
            assert goodput_estimate(rate, 1400) <= 8.0 * 1400 / t_data


class TestRun:
    def test_stationary_fading_free_rows_identical(self):
        traj = Trajectory(waypoints=((0.0, (5.0, 0.0, 0.0)),), fixed_pos=ORIGIN)
        engine = PropagationEngine.friis(5220.0)
        linkrun = run(traj, engine, table1_config(duration=10.0))
        assert len(linkrun.rows) == 11
        first = linkrun.rows[0]
        for row in linkrun.rows[1:]:
            assert (row.distance, row.loss, row.rx_power, row.snr, row.phy_rate, row.goodput) == \
                   (first.distance, first.loss, first.rx_power, first.snr, first.phy_rate, first.goodput)

    def test_same_seed_bit_identical(self, tmp_path):
        traj = sweep_trajectory()
        table = to_cdf_table(FadingFit("normal", (0.0, 4.0)), n_points=200)
        cfg = table1_config(duration=99.0)
        runs = []
        for name in ("a.csv", "b.csv"):
            engine = PropagationEngine.friis(5220.0, fading=(table, make_stream(17, 0)))
            linkrun = run(traj, engine, cfg)
            write_linkrun(linkrun, tmp_path / name)
            runs.append((tmp_path / name).read_bytes())
        assert runs[0] == runs[1]

    def test_goodput_nonzero_at_short_distance_with_table1_setup(self):
        traj = sweep_trajectory()
        engine = PropagationEngine.friis(5220.0)
        linkrun = run(traj, engine, table1_config(duration=99.0))
        assert linkrun.rows[0].distance == pytest.approx(2.07)
        assert linkrun.rows[0].goodput > 0

    def test_goodput_non_increasing_in_distance_without_fading(self):
        traj = sweep_trajectory()
        engine = PropagationEngine.friis(5220.0)
        linkrun = run(traj, engine, table1_config(duration=99.0))
        for earlier, later in zip(linkrun.rows, linkrun.rows[1:]):
            assert later.distance > earlier.distance
            assert later.goodput <= earlier.goodput

    def test_goodput_never_exceeds_phy_rate(self):
        traj = sweep_trajectory()
        table = to_cdf_table(FadingFit("normal", (0.0, 6.0)), n_points=300)
        engine = PropagationEngine.friis(5220.0, fading=(table, make_stream(5, 0)))
        linkrun = run(traj, engine, table1_config(duration=99.0))
        for row in linkrun.rows:
            assert 0.0 <= row.goodput <= row.phy_rate or row.phy_rate == 0.0

    def test_useful_bits_consistency(self):
        traj = sweep_trajectory()
        engine = PropagationEngine.friis(5220.0)
        cfg = table1_config(duration=99.0, tick=0.5)
        linkrun = run(traj, engine, cfg)
        forward = linkrun.total_useful_megabits(cfg.tick)
        backward = sum(row.goodput * cfg.tick for row in reversed(linkrun.rows))
        assert forward == pytest.approx(backward, rel=1e-6)

    def test_tick_grid_includes_duration_endpoint(self):
        traj = Trajectory(waypoints=((0.0, (3.0, 0.0, 0.0)),), fixed_pos=ORIGIN)
        engine = PropagationEngine.friis(5220.0)
        linkrun = run(traj, engine, table1_config(duration=4.0, tick=2.0))
        assert [row.t for row in linkrun.rows] == [0.0, 2.0, 4.0]


class TestTrajectoryFiles:
    def test_round_trip(self, tmp_path):
        traj = sweep_trajectory(steps=20)
        path = tmp_path / "traj.csv"
        write_trajectory(traj, path)
        loaded = read_trajectory(path, ORIGIN)
        assert loaded == traj

    def test_non_increasing_time_rejected(self, tmp_path):
        path = tmp_path / "traj.csv"
        path.write_text("t_s,x,y,z\n0.0,1,0,0\n0.0,2,0,0\n")
        with pytest.raises(ValidationError):
            read_trajectory(path, ORIGIN)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "traj.csv"
        path.write_text("time,x,y,z\n0.0,1,0,0\n")
        with pytest.raises(FileFormatError):
            read_trajectory(path, ORIGIN)


class TestLinkRunFiles:
    def test_round_trip(self, tmp_path):
        traj = sweep_trajectory()
        engine = PropagationEngine.friis(5220.0)
        linkrun = run(traj, engine, table1_config(duration=50.0))
        path = tmp_path / "run.csv"
        write_linkrun(linkrun, path)
        assert read_linkrun(path) == linkrun

    def test_validation(self):
        with pytest.raises(ValueError):
            SimConfig(budget=TABLE1_BUDGET, bandwidth=20.0, noise=RadioConfig(),
                      payload=1400, duration=10.0, tick=0.0)
        with pytest.raises(ValueError):
            SimConfig(budget=TABLE1_BUDGET, bandwidth=20.0, noise=RadioConfig(),
                      payload=0, duration=10.0)
