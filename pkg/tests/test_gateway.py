import json

import pytest
from fastapi.testclient import TestClient

from gaitgate.gateway import create_app
from gaitgate.service import GaitSpeedService
from gaitgate.simulate import WalkProfile, generate_walk

EPC = "300833B2DDD9014000000001"
EPC2 = "300833B2DDD9014000000002"


@pytest.fixture
def harness(tmp_path):
    service = GaitSpeedService(trial_log_path=tmp_path / "trials.jsonl")
    app = create_app(service, heartbeat_s=0.2)
    with TestClient(app) as client:
        yield client, service
    service.stop()


def wire_reads(walk, epc=EPC):
    reads = [{"epc": epc, "antennaPort": 1, "timestampUs": s.timestamp_us,
              "rssi": s.rssi_dbm} for s in walk.trace1]
    reads += [{"epc": epc, "antennaPort": 2, "timestampUs": s.timestamp_us,
               "rssi": s.rssi_dbm} for s in walk.trace2]
    reads.sort(key=lambda r: r["timestampUs"])
    return reads


class TestReadsIngestion:
    def test_valid_batch(self, harness):
        client, service = harness
        client.post("/api/tags", json={"label": "Tag1", "epc": EPC})
        reads = [{"epc": EPC, "antennaPort": 1, "timestampUs": i, "rssi": -50.0}
                 for i in range(20)]
        resp = client.post("/api/reads", json={"reads": reads})
        assert resp.status_code == 200
        body = resp.json()
        assert body["received"] == 20
        assert body["accepted"] == 20

    def test_not_json(self, harness):
        client, service = harness
        resp = client.post("/api/reads", content=b"not json",
                           headers={"content-type": "application/json"})
        assert resp.status_code == 400
        assert service.counters.total == 0

    def test_schema_violation_rejects_whole_batch(self, harness):
        client, service = harness
        reads = [{"epc": EPC, "antennaPort": 1, "timestampUs": 0, "rssi": -50.0},
                 {"epc": EPC, "antennaPort": "one", "timestampUs": 1,
                  "rssi": -50.0}]
        resp = client.post("/api/reads", json={"reads": reads})
        assert resp.status_code == 400
        assert service.counters.total == 0

    def test_empty_batch(self, harness):
        client, _ = harness
        assert client.post("/api/reads", json={"reads": []}).status_code == 400

    def test_oversize_batch(self, harness):
        client, _ = harness
        reads = [{"epc": EPC, "antennaPort": 1, "timestampUs": i, "rssi": -50.0}
                 for i in range(10_001)]
        resp = client.post("/api/reads", json={"reads": reads})
        assert resp.status_code == 413

    def test_unknown_epc_counted_not_errored(self, harness):
        client, service = harness
        reads = [{"epc": EPC2, "antennaPort": 1, "timestampUs": 0,
                  "rssi": -50.0}]
        resp = client.post("/api/reads", json={"reads": reads})
        assert resp.status_code == 200
        assert resp.json()["accepted"] == 0
        assert service.counters.unknown_epc == 1


class TestTags:
    def test_create_list_delete(self, harness):
        client, _ = harness
        resp = client.post("/api/tags", json={"label": "Tag1", "epc": EPC})
        assert resp.status_code == 201
        assert resp.json() == {"label": "Tag1", "epc": EPC}
        listed = client.get("/api/tags").json()["tags"]
        assert listed == [{"label": "Tag1", "epc": EPC}]
        assert client.delete("/api/tags/Tag1").status_code == 204
        assert client.get("/api/tags").json()["tags"] == []

    def test_conflict(self, harness):
        client, _ = harness
        client.post("/api/tags", json={"label": "Tag1", "epc": EPC})
        assert client.post("/api/tags",
                           json={"label": "Tag1", "epc": EPC2}).status_code == 409
        assert client.post("/api/tags",
                           json={"label": "Tag2", "epc": EPC}).status_code == 409

    def test_malformed_epc(self, harness):
        client, _ = harness
        resp = client.post("/api/tags", json={"label": "TagX", "epc": "XYZ"})
        assert resp.status_code == 422

    def test_delete_unknown(self, harness):
        client, _ = harness
        assert client.delete("/api/tags/Nope").status_code == 404


class TestConfig:
    def test_get_defaults(self, harness):
        client, _ = harness
        cfg = client.get("/api/config").json()
        assert cfg["params"] == {"w1": 14, "w2": 14, "tau1": 1.0, "tau2": 1.0,
                                 "distanceM": 4.0}
        assert cfg["portRoles"] == {"1": "entry", "2": "exit"}
        assert cfg["cooldownS"] == 10.0

    def test_put_and_get_round_trip(self, harness):
        client, service = harness
        new = {"params": {"w1": 10, "w2": 12, "tau1": 2.0, "tau2": 1.5,
                          "distanceM": 3.0}}
        resp = client.put("/api/config", json=new)
        assert resp.status_code == 200
        assert client.get("/api/config").json()["params"] == new["params"]
        assert service.params.w1 == 10

    def test_put_invalid_window(self, harness):
        client, _ = harness
        bad = {"params": {"w1": 1, "w2": 14, "tau1": 1.0, "tau2": 1.0}}
        assert client.put("/api/config", json=bad).status_code == 422

    def test_put_invalid_roles(self, harness):
        client, _ = harness
        assert client.put("/api/config",
                          json={"portRoles": {"1": "sideways"}}
                          ).status_code == 422

    def test_put_roles(self, harness):
        client, service = harness
        resp = client.put("/api/config",
                          json={"portRoles": {"3": "entry", "4": "exit",
                                              "1": "ignored"}})
        assert resp.status_code == 200
        assert service.port_roles == {3: "entry", 4: "exit", 1: "ignored"}


class TestTrials:
    def complete_walk(self, client, epc=EPC, speed=1.0, seed=3, offset_s=0):
        walk = generate_walk(WalkProfile(speed_mps=speed, seed=seed))
        reads = wire_reads(walk, epc)
        for r in reads:
            r["timestampUs"] += int(offset_s * 1e6)
        resp = client.post("/api/reads", json={"reads": reads})
        assert resp.status_code == 200

    def test_query_after_completions(self, harness):
        client, service = harness
        client.post("/api/tags", json={"label": "Tag1", "epc": EPC})
        for seed in range(8):
            self.complete_walk(client, speed=0.9 + 0.05 * seed, seed=seed,
                               offset_s=60 * seed)
            assert service.drain()
        trials = client.get("/api/trials", params={"limit": 5}).json()["trials"]
        assert len(trials) == 5
        assert all(t["classification"] == "success" for t in trials)
        # newest first
        times = [t["completedAt"] for t in trials]
        assert times == sorted(times, reverse=True)

    def test_tag_filter(self, harness):
        client, service = harness
        client.post("/api/tags", json={"label": "Tag1", "epc": EPC})
        client.post("/api/tags", json={"label": "Tag2", "epc": EPC2})
        self.complete_walk(client, epc=EPC)
        assert service.drain()
        assert client.get("/api/trials",
                          params={"tag": "Tag2"}).json()["trials"] == []
        assert len(client.get("/api/trials",
                              params={"tag": "Tag1"}).json()["trials"]) == 1

    def test_unknown_tag_404(self, harness):
        client, _ = harness
        assert client.get("/api/trials",
                          params={"tag": "Ghost"}).status_code == 404

    def test_bad_since_422(self, harness):
        client, _ = harness
        assert client.get("/api/trials",
                          params={"since": "yesterday"}).status_code == 422


class TestPushChannel:
    def test_result_pushed_to_subscriber(self, harness):
        client, service = harness
        client.post("/api/tags", json={"label": "Tag1", "epc": EPC})
        walk = generate_walk(WalkProfile(speed_mps=1.0, seed=3))
        with client.websocket_connect("/ws/results") as ws:
            resp = client.post("/api/reads", json={"reads": wire_reads(walk)})
            assert resp.status_code == 200
            message = ws.receive_json()
            while message.get("type") == "heartbeat":
                message = ws.receive_json()
            assert message["type"] == "gait_speed"
            assert message["label"] == "Tag1"
            assert message["classification"] == "success"
            assert abs(message["speedMps"] - 1.0) < 0.03

    def test_heartbeats_flow_when_idle(self, harness):
        client, _ = harness
        with client.websocket_connect("/ws/results") as ws:
            message = ws.receive_json()
            assert message["type"] == "heartbeat"

    def test_multiple_subscribers_all_receive(self, harness):
        client, service = harness
        client.post("/api/tags", json={"label": "Tag1", "epc": EPC})
        walk = generate_walk(WalkProfile(speed_mps=1.0, seed=3))
        with client.websocket_connect("/ws/results") as a, \
                client.websocket_connect("/ws/results") as b:
            client.post("/api/reads", json={"reads": wire_reads(walk)})
            for ws in (a, b):
                message = ws.receive_json()
                while message.get("type") == "heartbeat":
                    message = ws.receive_json()
                assert message["type"] == "gait_speed"

    def test_result_message_round_trips(self, harness):
        client, service = harness
        client.post("/api/tags", json={"label": "Tag1", "epc": EPC})
        walk = generate_walk(WalkProfile(speed_mps=1.0, seed=3))
        with client.websocket_connect("/ws/results") as ws:
            client.post("/api/reads", json={"reads": wire_reads(walk)})
            message = ws.receive_json()
            while message.get("type") == "heartbeat":
                message = ws.receive_json()
        assert json.loads(json.dumps(message)) == message
        stored = client.get("/api/trials").json()["trials"][0]
        stripped = {k: v for k, v in message.items() if k != "type"}
        assert stripped == stored
