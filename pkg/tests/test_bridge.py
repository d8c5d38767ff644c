import json
import socket
import urllib.error
import urllib.request

import pytest
from websockets.sync.client import connect

from deskbot.bridge import Bridge, BridgeError
from deskbot.plant import World
from deskbot.scenario import build_simulation, bundled_world, config_from_dict


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def make_world() -> World:
    return bundled_world("square4m")


@pytest.fixture
def bridge(monkeypatch, tmp_path):
    # isolate static-file resolution from the repo checkout
    monkeypatch.delenv("DESKBOT_UI_DIR", raising=False)
    monkeypatch.chdir(tmp_path)
    b = Bridge(make_world(), port=free_port(), meta={"dt": 0.02, "mode": "teleop"})
    b.start()
    yield b
    b.stop()


def ws_url(b: Bridge) -> str:
    return f"ws://{b.host}:{b.port}/"


def recv_frame(conn, timeout=5.0) -> dict:
    return json.loads(conn.recv(timeout=timeout))


def make_sim(b: Bridge):
    cfg = config_from_dict(
        {"world": "square4m", "duration_s": 60.0, "start_pose": [2.0, 2.0, 0.0]}
    )
    sim = build_simulation(cfg, inbound_drain=b.drain_inbound)
    sim.registry.sinks.append(b.collect)
    sim.after_tick.append(b.flush_tick)
    return sim


# ---------------------------------------------------------------- lifecycle


def test_port_busy_raises(bridge):
    other = Bridge(make_world(), port=bridge.port)
    with pytest.raises(BridgeError, match=str(bridge.port)):
        other.start()


def test_stop_is_idempotent(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    b = Bridge(make_world(), port=free_port())
    b.start()
    b.stop()
    b.stop()


# ---------------------------------------------------------------- websocket


def test_hello_frame(bridge):
    with connect(ws_url(bridge)) as conn:
        hello = recv_frame(conn)
    assert hello["topic"] == "_hello"
    assert hello["data"]["mode"] == "teleop"
    assert len(hello["data"]["world"]["walls"]) == 4


def test_frames_reach_client(bridge):
    sim = make_sim(bridge)
    with connect(ws_url(bridge)) as conn:
        recv_frame(conn)  # hello
        for _ in range(3):
            sim.run_tick()
        seen = [recv_frame(conn) for _ in range(16)]
    topics = {f["topic"] for f in seen}
    assert "odom" in topics and "estop" in topics
    odom = next(f for f in seen if f["topic"] == "odom")
    assert odom["tick"] == 0
    assert odom["data"]["x"] == 2.0


def test_subscribe_narrows_topics(bridge):
    sim = make_sim(bridge)
    with connect(ws_url(bridge)) as conn:
        recv_frame(conn)
        conn.send(json.dumps({"topic": "subscribe", "data": {"topics": ["estop"]}}))
        # give the server a beat to apply the filter before traffic starts
        import time

        time.sleep(0.2)
        for _ in range(5):
            sim.run_tick()
        frames = [recv_frame(conn) for _ in range(5)]
    assert all(f["topic"] == "estop" for f in frames)
    assert [f["tick"] for f in frames] == [0, 1, 2, 3, 4]


def test_inbound_key_drives_robot(bridge):
    sim = make_sim(bridge)
    with connect(ws_url(bridge)) as conn:
        recv_frame(conn)
        conn.send(json.dumps({"topic": "teleop_key", "data": {"key": "w"}}))
        # wait until the key lands in the inbound queue, then step
        deadline = 50
        while bridge._inbound.empty() and deadline:
            import time

            time.sleep(0.05)
            deadline -= 1
        assert deadline, "inbound frame never arrived"
        for _ in range(10):
            sim.run_tick()
    assert sim.plant.last_pwm[0] > 0
    assert sim.plant.truth.pose.x > 2.0


def test_error_frames_keep_connection(bridge):
    with connect(ws_url(bridge)) as conn:
        recv_frame(conn)
        conn.send("this is not json")
        err = recv_frame(conn)
        assert err["topic"] == "_error" and "malformed" in err["data"]["message"]
        conn.send(json.dumps({"topic": "odom", "data": {"x": 1}}))
        err = recv_frame(conn)
        assert "cannot publish" in err["data"]["message"]
        conn.send(json.dumps({"topic": "teleop_key", "data": {"nope": 1}}))
        err = recv_frame(conn)
        assert err["topic"] == "_error"
        conn.send(json.dumps({"topic": "subscribe", "data": {"topics": "estop"}}))
        err = recv_frame(conn)
        assert "subscribe" in err["data"]["message"]
        # connection still usable after all that
        conn.send(json.dumps({"topic": "estop_reset", "data": {}}))
    item = None
    for _ in range(50):
        items = bridge.drain_inbound()
        if items:
            item = items[0]
            break
        import time

        time.sleep(0.05)
    assert item is not None and item[0] == "estop_reset"


def test_goal_frame_round_trip(bridge):
    with connect(ws_url(bridge)) as conn:
        recv_frame(conn)
        conn.send(
            json.dumps({"topic": "goal", "data": {"x": 1.0, "y": 2.0, "theta": 0.5}})
        )
        import time

        for _ in range(50):
            items = bridge.drain_inbound()
            if items:
                break
            time.sleep(0.05)
    topic, payload = items[0]
    assert topic == "goal"
    assert (payload.x, payload.y, payload.theta) == (1.0, 2.0, 0.5)


def test_drop_counter_reports(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    b = Bridge(make_world(), port=free_port(), queue_limit=4)
    b.start()
    try:
        sim = make_sim(b)
        with connect(ws_url(b)) as conn:
            recv_frame(conn)
            # flood faster than the client reads: many ticks, tiny queue
            for _ in range(40):
                sim.run_tick()
            saw_drop = False
            for _ in range(200):
                frame = recv_frame(conn)
                if frame["topic"] == "_bridge":
                    saw_drop = frame["data"]["dropped"] > 0
                    break
        assert saw_drop
    finally:
        b.stop()


# ---------------------------------------------------------------- plain http


def http_get(url: str):
    with urllib.request.urlopen(url, timeout=5.0) as resp:
        return resp.status, resp.headers.get("Content-Type"), resp.read()


def test_scene_json(bridge):
    status, ctype, body = http_get(f"http://{bridge.host}:{bridge.port}/scene.json")
    assert status == 200 and ctype == "application/json"
    scene = json.loads(body)
    assert scene["world"]["name"] == "square4m"
    assert scene["dt"] == 0.02


def test_placeholder_page_without_build(bridge):
    status, ctype, body = http_get(f"http://{bridge.host}:{bridge.port}/")
    assert status == 200 and ctype.startswith("text/html")
    assert b"deskbot" in body.lower()
    with pytest.raises(urllib.error.HTTPError) as err:
        http_get(f"http://{bridge.host}:{bridge.port}/app.js")
    assert err.value.code == 404


def test_static_dir_serving(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    site = tmp_path / "dist"
    site.mkdir()
    (site / "index.html").write_text("<html>real ui</html>")
    (site / "app.js").write_text("console.log('hi')")
    (tmp_path / "secret.txt").write_text("keep out")
    b = Bridge(make_world(), port=free_port(), static_dir=str(site))
    b.start()
    try:
        base = f"http://{b.host}:{b.port}"
        status, ctype, body = http_get(f"{base}/")
        assert body == b"<html>real ui</html>" and ctype.startswith("text/html")
        status, ctype, _ = http_get(f"{base}/app.js")
        assert ctype.startswith("text/javascript")
        # path traversal must not escape the static root
        raw = (
            b"GET /%2e%2e/secret.txt HTTP/1.1\r\n"
            b"Host: x\r\nConnection: close\r\n\r\n"
        )
        with socket.create_connection((b.host, b.port), timeout=5.0) as s:
            s.sendall(raw)
            reply = s.recv(65536)
        assert b"404" in reply.split(b"\r\n", 1)[0]
    finally:
        b.stop()
