import json
import math
import os

import pytest

from deskbot import bus, cli
from deskbot.bus import NodeError
from deskbot.kinematics import Pose2D
from deskbot.nodes import Node
from deskbot.scenario import (
    ConfigError,
    TraceRecorder,
    build_simulation,
    bundled_world,
    config_from_dict,
    load_config,
    parse_script,
)


def make_cfg(**overrides):
    data = {
        "world": "square4m",
        "mode": "teleop",
        "duration_s": 2.0,
        "start_pose": [1.0, 2.0, 0.0],
    }
    data.update(overrides)
    return config_from_dict(data)


def run_recorded(cfg, script=None):
    sim = build_simulation(cfg, script=script)
    recorder = TraceRecorder()
    sim.registry.sinks.append(recorder)
    sim.run()
    return sim, recorder


# ---------------------------------------------------------------- config


def test_config_defaults():
    cfg = make_cfg()
    assert cfg.dt == 0.02
    assert cfg.control_period == 5
    assert cfg.gains.sample_time == pytest.approx(0.1)
    assert cfg.ticks == 100
    assert not cfg.lidar_enabled


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="controler"):
        config_from_dict({"world": "square4m", "controler": {}})
    with pytest.raises(ConfigError, match="config.motor"):
        config_from_dict({"world": "square4m", "motor": {"tua": 0.2}})


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError, match="mode"):
        config_from_dict({"mode": "fly"})
    with pytest.raises(ConfigError, match="dt"):
        config_from_dict({"dt": -0.02})
    with pytest.raises(ConfigError, match="goto.goal"):
        config_from_dict({"mode": "goto"})
    with pytest.raises(ConfigError, match="start_pose"):
        config_from_dict({"start_pose": [1.0, 2.0]})


def test_config_missing_world_file():
    with pytest.raises(ConfigError, match="missing.json"):
        config_from_dict({"world": "./missing.json"})


def test_config_missing_table():
    with pytest.raises(ConfigError, match="table"):
        config_from_dict({"controller": {"kind": "segmented"}})
    with pytest.raises(ConfigError, match="nope.csv"):
        config_from_dict({"controller": {"kind": "segmented", "table": "nope.csv"}})


def test_unknown_bundled_world():
    with pytest.raises(ConfigError, match="pentagon"):
        config_from_dict({"world": "pentagon"})


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "none.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="valid JSON"):
        load_config(bad)


def test_world_path_relative_to_config(tmp_path):
    world = {"name": "w", "bounds": [0, 0, 1, 1], "walls": [[[0, 0], [1, 0]]]}
    (tmp_path / "w.json").write_text(json.dumps(world))
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"world": "w.json", "duration_s": 0.1}))
    cfg = load_config(cfg_path)
    assert cfg.world.name == "w"
    assert cfg.name == "cfg"


# ---------------------------------------------------------------- scripts


def test_parse_script():
    script = parse_script("0:w\n# comment\n\n10: a\n10:space\n250:reset\n")
    assert script == {0: ["w"], 10: ["a", "space"], 250: ["reset"]}


def test_parse_script_errors():
    with pytest.raises(ConfigError, match="line 1"):
        parse_script("w\n")
    with pytest.raises(ConfigError, match="line 2"):
        parse_script("0:w\nx:y\n")
    with pytest.raises(ConfigError, match=">= 0"):
        parse_script("-3:w\n")


# ---------------------------------------------------------------- graph


def test_node_order():
    sim = build_simulation(make_cfg(mode="goto", goto={"goal": [2.0, 2.0, 0.0]}))
    names = [n.name for n in sim.nodes]
    assert names == [
        "keyboard_control",
        "estop_node",
        "tele_converter",
        "goto_planner",
        "wheel_speed",
        "pid_control",
        "launchpad_node",
        "odom_node",
    ]


def test_key_at_tick_zero_reaches_plant_same_tick():
    sim, rec = run_recorded(make_cfg(duration_s=0.1), script={0: ["w"]})
    tick0_pwm = [wire for tick, wire in rec.rows[bus.PWM] if tick == 0]
    assert tick0_pwm and tick0_pwm[0]["left"] > 0
    # and the plant moved on the very first tick
    first_odom = rec.rows[bus.ODOM][0]
    assert first_odom[0] == 0


def test_command_held_between_keys():
    sim, rec = run_recorded(make_cfg(duration_s=1.0), script={0: ["w"]})
    targets = dict(rec.rows[bus.WHEEL_TARGET])
    assert targets[40]["left"] == pytest.approx(0.3)  # still active much later


def test_stop_key_zeroes_target():
    sim, rec = run_recorded(make_cfg(duration_s=1.0), script={0: ["w"], 25: ["space"]})
    targets = dict(rec.rows[bus.WHEEL_TARGET])
    assert targets[24]["left"] == pytest.approx(0.3)
    assert targets[25]["left"] == 0.0


def test_controller_cadence():
    sim, rec = run_recorded(make_cfg(duration_s=0.5), script={0: ["w"]})
    pwm_ticks = [tick for tick, _ in rec.rows[bus.PWM]]
    assert pwm_ticks == [0, 5, 10, 15, 20]


def test_lidar_cadence_from_rate():
    cfg = make_cfg(duration_s=1.0, lidar={"enabled": True, "rate_hz": 5.5})
    sim, rec = run_recorded(cfg)
    scan_ticks = [tick for tick, _ in rec.rows[bus.SCAN]]
    assert scan_ticks == [0, 9, 18, 27, 36, 45]  # round(1/(5.5*0.02)) = 9


def test_estop_latches_and_zeroes_pwm_on_cliff():
    cfg = config_from_dict(
        {
            "world": "cliff_table",
            "mode": "teleop",
            "duration_s": 6.0,
            "start_pose": [0.6, 0.4, 0.0],
        }
    )
    sim, rec = run_recorded(cfg, script={0: ["w"]})
    estop_rows = rec.rows[bus.ESTOP]
    latch_tick = next(tick for tick, wire in estop_rows if wire["value"])
    assert latch_tick > 0
    assert sim.plant.truth.pose.x < 1.2  # never left the table top
    assert sim.plant.last_pwm == (0, 0)
    assert dict(rec.rows[bus.LED_STATUS])[latch_tick]["state"] == "estop"
    # wheels settle to a stop shortly after the latch
    assert abs(sim.plant.truth.wheels.left) < 1e-6


def test_estop_reset_relatches_while_cliff_ahead():
    cfg = config_from_dict(
        {
            "world": "cliff_table",
            "mode": "teleop",
            "duration_s": 8.0,
            "start_pose": [0.6, 0.4, 0.0],
        }
    )
    sim, rec = run_recorded(cfg, script={0: ["w"], 300: ["reset"], 301: ["w"]})
    estop = dict(rec.rows[bus.ESTOP])
    assert estop[300]["value"] is True  # reset denied: probe still over the edge
    assert all(wire["value"] for tick, wire in rec.rows[bus.ESTOP] if tick >= 300)


def test_estop_reset_clears_when_safe():
    cfg = config_from_dict(
        {
            "world": "cliff_table",
            "mode": "teleop",
            "duration_s": 2.0,
            "start_pose": [0.6, 0.4, 0.0],
        }
    )
    # force a latch by hand, then reset with the probe over the table
    sim = build_simulation(cfg, script={3: ["reset"]})
    estop_node = sim.by_name["estop_node"]
    estop_node.latched = True
    rec = TraceRecorder()
    sim.registry.sinks.append(rec)
    sim.run(5)
    estop = dict(rec.rows[bus.ESTOP])
    assert estop[2]["value"] is True
    assert estop[3]["value"] is False


def test_goto_mode_reaches_goal():
    cfg = make_cfg(
        mode="goto",
        duration_s=30.0,
        goto={"goal": [2.0, 3.0, 1.0]},
    )
    sim, rec = run_recorded(cfg)
    assert sim.by_name["goto_planner"].arrived
    final = sim.plant.truth.pose
    assert math.hypot(final.x - 2.0, final.y - 3.0) < 0.08
    # goal visible on the bus for observers
    assert dict(rec.rows[bus.GOAL])[0] == {"x": 2.0, "y": 3.0, "theta": 1.0}


def test_run_until_stops_early():
    cfg = make_cfg(mode="goto", duration_s=60.0, goto={"goal": [1.5, 2.0, 0.0]})
    sim = build_simulation(cfg)
    ran = sim.run(until=lambda s: s.by_name["goto_planner"].arrived)
    assert ran < cfg.ticks


def test_node_error_carries_name():
    class Bomb(Node):
        name = "bomb"

        def step(self, tick):
            if tick == 3:
                raise RuntimeError("kaput")

    sim = build_simulation(make_cfg(duration_s=0.5))
    bomb = Bomb()
    bomb.wire(sim.registry)
    sim.nodes.append(bomb)
    with pytest.raises(NodeError, match="bomb"):
        sim.run()
    assert sim.tick == 3


def test_zero_duration_runs_zero_ticks(tmp_path):
    sim, rec = run_recorded(make_cfg(duration_s=0.0))
    assert sim.tick == 0
    rec.write(tmp_path)
    odom = (tmp_path / "odom.csv").read_text().splitlines()
    assert odom == ["tick,x,y,theta,vx,vy,omega"]
    rep = sim.report()
    assert rep["final_odom"]["x"] == 1.0
    assert rep["drift"]["position"] == 0.0


# ---------------------------------------------------------------- determinism


def test_runs_are_reproducible_in_memory():
    script = {0: ["w"], 30: ["a"], 60: ["space"]}
    _, rec1 = run_recorded(make_cfg(duration_s=2.0), script=script)
    _, rec2 = run_recorded(make_cfg(duration_s=2.0), script=script)
    assert rec1.rows == rec2.rows


def test_seed_changes_noisy_run():
    def run(seed):
        cfg = make_cfg(
            duration_s=1.0, motor={"noise_std": 0.05}, seed=seed
        )
        _, rec = run_recorded(cfg, script={0: ["w"]})
        return rec.rows[bus.ODOM][-1]

    assert run(1) == run(1)
    assert run(1) != run(2)


def test_trace_files_byte_identical(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(
        json.dumps({"world": "square4m", "duration_s": 1.0, "start_pose": [2, 2, 0]})
    )
    script = tmp_path / "s.txt"
    script.write_text("0:w\n20:a\n")
    for sub in ("a", "b"):
        code = cli.main(
            [
                "sim",
                "--config",
                str(cfg_path),
                "--script",
                str(script),
                "--out-dir",
                str(tmp_path / sub),
            ]
        )
        assert code == 0
    for name in os.listdir(tmp_path / "a"):
        assert (tmp_path / "a" / name).read_bytes() == (
            tmp_path / "b" / name
        ).read_bytes()


# ---------------------------------------------------------------- cli


def test_cli_sim_writes_outputs(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"world": "square4m", "duration_s": 0.5}))
    code = cli.main(["sim", "--config", str(cfg), "--out-dir", str(tmp_path / "out")])
    assert code == 0
    out = capsys.readouterr().out
    assert "drift" in out
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["ticks"] == 25
    assert (tmp_path / "out" / "cmd_vel.csv").exists()


def test_cli_config_error_exit_2(tmp_path, capsys):
    missing = cli.main(["sim", "--config", str(tmp_path / "none.json")])
    assert missing == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"mode": "fly"}')
    assert cli.main(["sim", "--config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "mode" in err


def test_cli_bad_script_exit_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"world": "square4m", "duration_s": 0.5}))
    script = tmp_path / "s.txt"
    script.write_text("oops\n")
    assert cli.main(["sim", "--config", str(cfg), "--script", str(script)]) == 2


def test_cli_node_error_exit_3(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"world": "square4m", "duration_s": 0.5}))

    class Bomb(Node):
        name = "bomb"

        def step(self, tick):
            raise RuntimeError("surprise")

    real_build = cli.build_simulation

    def sabotaged(*args, **kwargs):
        sim = real_build(*args, **kwargs)
        bomb = Bomb()
        bomb.wire(sim.registry)
        sim.nodes.append(bomb)
        return sim

    monkeypatch.setattr(cli, "build_simulation", sabotaged)
    code = cli.main(["sim", "--config", str(cfg), "--out-dir", str(tmp_path / "o")])
    assert code == 3
    assert "bomb" in capsys.readouterr().err


def test_cli_calibrate(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"world": "square4m"}))
    out = tmp_path / "table.csv"
    code = cli.main(
        ["calibrate", "--config", str(cfg), "--out", str(out), "--step", "51"]
    )
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "wheel,pwm,speed_mps"
    printed = capsys.readouterr().out
    assert "left:" in printed and "m/s at pwm 255" in printed


def test_cli_map_mode_exports_pgm(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(
        json.dumps(
            {
                "world": "square4m",
                "mode": "map",
                "duration_s": 3.0,
                "start_pose": [2.0, 2.0, 0.0],
                "mapping": {"pose_source": "truth"},
            }
        )
    )
    script = tmp_path / "s.txt"
    script.write_text("0:a\n")
    out = tmp_path / "out"
    assert (
        cli.main(
            ["sim", "--config", str(cfg), "--script", str(script), "--out-dir", str(out)]
        )
        == 0
    )
    data = (out / "map.pgm").read_bytes()
    assert data.startswith(b"P5\n80 80\n255\n")
    assert (out / "map.yaml").exists()
    report = json.loads((out / "report.json").read_text())
    assert report["map"] == "map.pgm"
