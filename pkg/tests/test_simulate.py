import json
import math

import pytest

from gaitgate.core import (
    DetectionParams,
    compute_gait_speed,
    offline_reference_edges,
)
from gaitgate.simulate import (
    DETECTABILITY_FLOOR_DBM,
    ENTRY_PORT,
    EXIT_PORT,
    PATH_LOSS_EXPONENT,
    REFERENCE_RSSI_DBM,
    SATURATION_DISTANCE_M,
    GroundTruth,
    WalkProfile,
    generate_corpus,
    generate_walk,
    load_corpus,
    quantize_rssi,
    read_capture,
    rssi_model,
    write_capture,
)


class TestRssiModel:
    def test_reference_distance(self):
        assert rssi_model(1.0) == pytest.approx(REFERENCE_RSSI_DBM)

    def test_clamp_region_is_flat(self):
        sat = rssi_model(SATURATION_DISTANCE_M)
        assert rssi_model(0.0) == sat
        assert rssi_model(SATURATION_DISTANCE_M / 2) == sat

    def test_clamp_value(self):
        expected = REFERENCE_RSSI_DBM - 10 * PATH_LOSS_EXPONENT * math.log10(
            SATURATION_DISTANCE_M)
        assert rssi_model(SATURATION_DISTANCE_M) == pytest.approx(expected)
        assert quantize_rssi(expected) == -43.5

    def test_monotone_beyond_clamp(self):
        distances = [0.2, 0.5, 1.0, 2.0, 5.0]
        values = [rssi_model(d) for d in distances]
        assert values == sorted(values, reverse=True)

    def test_negative_distance_rejected(self):
        with pytest.raises(ValueError):
            rssi_model(-0.1)

    def test_overrides(self):
        assert rssi_model(1.0, reference_rssi_dbm=-50.0) == pytest.approx(-50.0)
        assert rssi_model(10.0, path_loss_exponent=2.0) == pytest.approx(
            REFERENCE_RSSI_DBM - 20.0)


class TestQuantization:
    def test_grid_values(self):
        assert quantize_rssi(-43.49) == -43.5
        assert quantize_rssi(-43.74) == -43.5
        assert quantize_rssi(-43.76) == -44.0
        assert quantize_rssi(-70.0) == -70.0

    def test_idempotent(self):
        for r in (-43.5, -44.0, -61.5):
            assert quantize_rssi(r) == r


class TestGenerateWalk:
    def test_deterministic_in_seed(self):
        p = WalkProfile(speed_mps=1.1, seed=42)
        a, b = generate_walk(p), generate_walk(p)
        assert a.trace1 == b.trace1
        assert a.trace2 == b.trace2
        assert a.truth == b.truth

    def test_seed_changes_noise(self):
        a = generate_walk(WalkProfile(seed=1))
        b = generate_walk(WalkProfile(seed=2))
        assert a.trace1 != b.trace1

    def test_ground_truth_interval_is_exact(self):
        for v in (0.6, 0.751, 1.0, 1.37):
            w = generate_walk(WalkProfile(speed_mps=v, seed=5))
            assert w.truth.true_t2_us - w.truth.true_t1_us == round(4.0 / v * 1e6)
            assert w.truth.true_speed_mps == v

    def test_trace_sizes_at_normal_speed(self):
        w = generate_walk(WalkProfile(speed_mps=1.0, noise_sigma_dbm=0.0, seed=3))
        assert 50 <= len(w.trace1) <= 150
        assert 50 <= len(w.trace2) <= 150
        assert not w.low_sample_warning

    def test_plateau_width_scales_with_speed(self):
        def plateau(v):
            w = generate_walk(WalkProfile(speed_mps=v, noise_sigma_dbm=0.0, seed=3))
            peak = max(s.rssi_dbm for s in w.trace1)
            return sum(1 for s in w.trace1 if s.rssi_dbm == peak)

        assert plateau(1.0) == 7
        assert plateau(0.6) == pytest.approx(11, abs=1)
        assert plateau(1.5) == pytest.approx(5, abs=1)

    def test_timestamps_strictly_increase_and_never_collide(self):
        w = generate_walk(WalkProfile(speed_mps=0.9, seed=8))
        for tr in (w.trace1, w.trace2):
            ts = [s.timestamp_us for s in tr]
            assert ts == sorted(ts)
            assert len(ts) == len(set(ts))
        joint = [s.timestamp_us for s in w.trace1 + w.trace2]
        assert len(joint) == len(set(joint))

    def test_all_samples_above_floor_and_on_grid(self):
        w = generate_walk(WalkProfile(seed=9))
        for s in w.trace1 + w.trace2:
            assert s.rssi_dbm >= DETECTABILITY_FLOOR_DBM
            assert s.rssi_dbm == quantize_rssi(s.rssi_dbm)

    def test_entry_peak_precedes_first_exit_read(self):
        w = generate_walk(WalkProfile(speed_mps=1.0, noise_sigma_dbm=0.0, seed=3))
        peak = max(w.trace1, key=lambda s: s.rssi_dbm)
        assert peak.timestamp_us < w.trace2[0].timestamp_us

    def test_noiseless_end_to_end_error_below_one_percent(self):
        for v in (0.6, 0.751, 1.0, 1.5):
            w = generate_walk(WalkProfile(speed_mps=v, noise_sigma_dbm=0.0, seed=3))
            t1, t2 = offline_reference_edges(w.trace1, w.trace2, DetectionParams())
            measured = compute_gait_speed(t1, t2, 4.0)
            assert abs(measured - v) / v < 0.01

    def test_gain_offset_shifts_peak_but_not_speed(self):
        base = generate_walk(WalkProfile(noise_sigma_dbm=0.0, seed=3))
        hot = generate_walk(WalkProfile(noise_sigma_dbm=0.0, seed=3,
                                        gain_offset_dbm=2.0))
        assert max(s.rssi_dbm for s in hot.trace1) == \
            max(s.rssi_dbm for s in base.trace1) + 2.0
        params = DetectionParams()
        v_base = compute_gait_speed(
            *offline_reference_edges(base.trace1, base.trace2, params), 4.0)
        v_hot = compute_gait_speed(
            *offline_reference_edges(hot.trace1, hot.trace2, params), 4.0)
        assert v_hot == pytest.approx(v_base, rel=0.01)

    def test_false_peaks_only_on_entry_before_walk(self):
        profile = WalkProfile(speed_mps=1.0, seed=4,
                              false_peaks=((0.5, 1.0, -46.0), (2.0, 0.8, -50.0)))
        plain = generate_walk(WalkProfile(speed_mps=1.0, seed=4))
        w = generate_walk(profile)
        assert len(w.trace1) > len(plain.trace1)
        # the walk itself is pushed later, past the last bump plus a gap
        assert w.truth.true_t1_us > 2_800_000
        early = [s for s in w.trace1 if s.timestamp_us < 2_800_000]
        assert early  # bump reads present
        assert max(s.rssi_dbm for s in early) <= -44.0

    def test_low_sample_warning_when_zone_is_tiny(self):
        w = generate_walk(WalkProfile(speed_mps=1.5, seed=6), floor_dbm=-44.0)
        assert w.low_sample_warning


class TestCaptureFiles:
    def test_round_trip(self, tmp_path):
        profile = WalkProfile(speed_mps=1.2, seed=11)
        walk = generate_walk(profile)
        path = tmp_path / "walk.jsonl"
        write_capture(path, walk, profile, DetectionParams())
        cap = read_capture(path)
        assert cap.trace(ENTRY_PORT) == walk.trace1
        assert cap.trace(EXIT_PORT) == walk.trace2
        assert cap.truth == walk.truth

    def test_reads_sorted_by_timestamp(self, tmp_path):
        profile = WalkProfile(seed=12)
        walk = generate_walk(profile)
        path = tmp_path / "walk.jsonl"
        write_capture(path, walk, profile, DetectionParams())
        cap = read_capture(path)
        ts = [r["timestampUs"] for r in cap.reads]
        assert ts == sorted(ts)

    def test_header_is_first_line_json(self, tmp_path):
        profile = WalkProfile(seed=13)
        write_capture(tmp_path / "w.jsonl", generate_walk(profile), profile,
                      DetectionParams())
        first = (tmp_path / "w.jsonl").read_text().splitlines()[0]
        header = json.loads(first)
        assert header["schemaVersion"] == 1
        assert "groundTruth" in header


class TestCorpus:
    def test_regeneration_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate_corpus(6, (0.6, 1.5), 7, a)
        generate_corpus(6, (0.6, 1.5), 7, b)
        for name in sorted(p.name for p in a.iterdir()):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_different_seed_differs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate_corpus(3, (0.6, 1.5), 7, a)
        generate_corpus(3, (0.6, 1.5), 8, b)
        assert (a / "walk_000.jsonl").read_bytes() != \
            (b / "walk_000.jsonl").read_bytes()

    def test_manifest_and_load(self, tmp_path):
        out = tmp_path / "corpus"
        generate_corpus(5, (0.8, 1.2), 21, out)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["n"] == 5
        assert len(manifest["walks"]) == 5
        corpus = load_corpus(out)
        assert len(corpus) == 5
        for cap, entry in zip(corpus, manifest["walks"]):
            assert cap.truth.true_speed_mps == entry["trueSpeedMps"]
            assert 0.8 <= cap.truth.true_speed_mps <= 1.2

    def test_speeds_span_requested_range(self, tmp_path):
        out = tmp_path / "corpus"
        generate_corpus(26, (0.6, 1.5), 7, out)
        speeds = [c.truth.true_speed_mps for c in load_corpus(out)]
        assert min(speeds) >= 0.6
        assert max(speeds) <= 1.5
        assert max(speeds) - min(speeds) > 0.5

    def test_rejects_empty(self, tmp_path):
        with pytest.raises(ValueError):
            generate_corpus(0, (0.6, 1.5), 7, tmp_path / "x")


def test_ground_truth_is_plain_value_object():
    gt = GroundTruth(1_000_000, 5_000_000, 1.0)
    assert gt.true_t2_us - gt.true_t1_us == 4_000_000
