"""Checks that the Python module exposes the core pipeline end to end."""
import json
import math
import os
import sys
import tempfile

import spinloc


def approx(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def test_protocol():
    assert spinloc.crc4(b"123456789") == 0x7
    assert spinloc.crc4(bytes([0x12, 0x34, 0x56, 0x78, 0x9A, 0xBC])) == 0x2

    p = spinloc.Packet()
    p.source_id = 13
    p.packet_index = 4
    p.payload = b"\xab\xcd"
    p.msg_crc = 0x9
    p.origin = spinloc.Origin.Bottom
    assert spinloc.decode_pulse_train(spinloc.encode_packet(p)) == p

    bad = spinloc.encode_packet(p)
    bad.edges[3].off += 150
    try:
        spinloc.decode_pulse_train(bad)
    except ValueError:
        pass
    else:
        raise AssertionError("widened pulse should not decode")


def test_geometry_sensing_round_trip():
    omega = 2 * math.pi * 25.0
    params = spinloc.GeometryParams()
    r, alpha = 0.3, math.radians(12.0)
    tx = (0.0, r, r * math.tan(alpha))
    t = {
        rx: spinloc.crossing_times(tx, omega, 0.0, rx)[0]
        for rx in (spinloc.ReceiverId.Left, spinloc.ReceiverId.Middle,
                   spinloc.ReceiverId.Right)
    }
    rel = spinloc.ideal_relative(
        t[spinloc.ReceiverId.Left], t[spinloc.ReceiverId.Middle],
        t[spinloc.ReceiverId.Right], omega, params.receiver_offset, params.phi)
    approx(rel.range, r, 1e-9)
    approx(rel.alpha, alpha, 1e-9)

    u = spinloc.propagate_uncertainty(r, alpha, omega, params.receiver_offset,
                                      params.phi, 21.7e-6)
    assert u.sigma_r > 0 and u.sigma_alpha > 0

    table = spinloc.CalibrationTable.ideal(params.receiver_offset, params.phi,
                                           omega, 21.7e-6)
    approx(table.r_eff, params.receiver_offset, 1e-12)
    again = spinloc.CalibrationTable.from_json(table.to_json())
    approx(again.sigma_r_coeff, table.sigma_r_coeff, 1e-12)


def test_solver():
    omega = 2 * math.pi * 25.0
    truth = (0.02, -0.03, 0.0)
    beacons = [(0.50, 0.10, 0.0), (-0.30, 0.40, 0.0), (0.20, -0.45, 0.0)]
    obs = []
    for i, b in enumerate(beacons):
        o = spinloc.FacingObservation()
        o.neighbor_id = i + 1
        o.neighbor_pos = b
        dx, dy = b[0] - truth[0], b[1] - truth[1]
        o.range = math.hypot(dx, dy)
        o.sigma_r = 0.005
        o.t_facing = (math.atan2(dy, dx) % (2 * math.pi)) / omega * 1e9
        o.t_facing_prev = o.t_facing - 2 * math.pi / omega * 1e9
        obs.append(o)
    approx(spinloc.estimate_omega(obs), omega, 1e-9)
    est = spinloc.solve_xy(obs, omega)
    approx(est.s.x, truth[0], 1e-9)
    approx(est.s.y, truth[1], 1e-9)
    assert est.sigma_xy > 0

    try:
        spinloc.solve_xy(obs[:1], omega)
    except RuntimeError:
        pass
    else:
        raise AssertionError("one neighbor should be underdetermined")


def test_engine_and_analysis():
    cfg = spinloc.parse_scenario(json.dumps({
        "schema_version": 1,
        "duration_s": 3.0,
        "warmup_s": 0.5,
        "seed": 9,
        "ideal_channel": True,
        "robots": [
            {"id": 1, "role": "beacon", "position": [0.35, 0.0, 0.0]},
            {"id": 2, "role": "beacon", "position": [-0.25, 0.30, 0.0],
             "spin_phase": 2.1},
            {"id": 3, "role": "beacon", "position": [-0.10, -0.35, 0.0],
             "spin_phase": 4.2},
            {"id": 10, "role": "drone", "position": [0.0, -0.02, 0.12],
             "spin_phase": 1.0},
        ],
    }))
    params = spinloc.GeometryParams()
    table = spinloc.CalibrationTable.ideal(params.receiver_offset, params.phi,
                                           2 * math.pi * cfg.spin_hz, 21.7e-6)
    result = spinloc.run_scenario(cfg, table)
    assert len(result.estimates) >= 70
    assert result.robots[10].solves == len(result.estimates)

    series = spinloc.error_series(result.estimates, result.truth, 10, cfg.warmup_s)
    stats = spinloc.error_stats(series)
    assert stats.rmse_3d < 1e-6, stats.rmse_3d

    with tempfile.TemporaryDirectory() as d:
        spinloc.write_run_outputs(result, d)
        for f in ("truth.csv", "estimates.csv", "summary.json"):
            assert os.path.exists(os.path.join(d, f)), f

    try:
        spinloc.parse_scenario("{\"schema_version\": 1}")
    except ValueError as e:
        assert "robots" in str(e)
    else:
        raise AssertionError("empty robot list should be rejected")


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for t in tests:
        t()
        print(f"{t.__name__}: ok")
    print(f"{len(tests)} python checks passed")


if __name__ == "__main__":
    sys.exit(main())
