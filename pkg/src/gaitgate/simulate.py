"""Reader emulator: synthetic dual-antenna RSSI walks with ground truth,
capture files, corpus generation, and HTTP replay against a running service.

The propagation model is a log-distance path with a near-field clamp. The
clamp produces the flat plateau readers report while a tag passes close to
an antenna; the detectability floor bounds each antenna's read zone so the
exit antenna only sees the tag after it has passed the entry antenna.
"""

from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import httpx

from gaitgate.core import DetectionParams, RssiSample

# Log-distance model calibration. Chosen so that at 30 Hz and walking speeds
# of 0.6-1.5 m/s the reported plateau (top quantization band) spans a handful
# of samples, the 1 dBm drop used by the default detectors lands within ~1
# sample of the plateau edge, and the peak sits near the centre of a reporting
# band close to the top of the -70..-40 dBm threshold-search range.
REFERENCE_RSSI_DBM = -63.27    # at 1 m
REFERENCE_DISTANCE_M = 1.0
PATH_LOSS_EXPONENT = 2.4
SATURATION_DISTANCE_M = 0.15
DETECTABILITY_FLOOR_DBM = -70.0
# Readers report RSSI on a coarse grid, not as a continuous value.
QUANTIZATION_STEP_DBM = 0.5

ENTRY_PORT = 1
EXIT_PORT = 2

SIM_EPC = "3008A5F0C0FFEE0000000001"


def rssi_model(
    distance_m: float,
    reference_rssi_dbm: Optional[float] = None,
    path_loss_exponent: Optional[float] = None,
    saturation_distance_m: Optional[float] = None,
) -> float:
    """RSSI in dBm at a tag-antenna distance; constant inside the clamp."""
    if distance_m < 0:
        raise ValueError("distance_m must be >= 0")
    p0 = REFERENCE_RSSI_DBM if reference_rssi_dbm is None else reference_rssi_dbm
    n = PATH_LOSS_EXPONENT if path_loss_exponent is None else path_loss_exponent
    d_sat = SATURATION_DISTANCE_M if saturation_distance_m is None else saturation_distance_m
    d = max(distance_m, d_sat)
    return p0 - 10.0 * n * math.log10(d / REFERENCE_DISTANCE_M)


def quantize_rssi(rssi_dbm: float) -> float:
    """Snap a continuous RSSI value to the reader's reporting grid."""
    step = QUANTIZATION_STEP_DBM
    return round(rssi_dbm / step) * step


@dataclass(frozen=True)
class WalkProfile:
    """Description of one synthetic walk past the two antennas."""

    speed_mps: float = 1.0
    lateral_offset_m: float = 0.10
    start_x_m: float = -2.0
    sample_rate_hz: float = 30.0
    noise_sigma_dbm: float = 0.1
    gain_offset_dbm: float = 0.0  # per-tag antenna/orientation gain spread
    false_peaks: tuple = ()  # (time_s, duration_s, peak_dbm) entry-antenna bumps
    seed: int = 0

    def __post_init__(self) -> None:
        if self.speed_mps <= 0:
            raise ValueError("speed_mps must be > 0")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be > 0")
        if self.noise_sigma_dbm < 0:
            raise ValueError("noise_sigma_dbm must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    """Instants of closest approach to each antenna, plus the true speed."""

    true_t1_us: int
    true_t2_us: int
    true_speed_mps: float


@dataclass
class GeneratedWalk:
    trace1: list[RssiSample]
    trace2: list[RssiSample]
    truth: GroundTruth
    low_sample_warning: bool = False


def _false_peak_samples(
    peaks: Sequence[tuple], sample_rate_hz: float, rng: random.Random,
    noise_sigma: float, floor_dbm: float,
) -> list[RssiSample]:
    samples: list[RssiSample] = []
    dt = 1.0 / sample_rate_hz
    for time_s, duration_s, peak_dbm in peaks:
        n = max(1, int(duration_s * sample_rate_hz))
        for i in range(n):
            t = time_s + i * dt
            # raised-cosine excursion from the floor up to peak_dbm
            shape = 0.5 * (1 - math.cos(2 * math.pi * (i + 0.5) / n))
            rssi = floor_dbm - 3.0 + (peak_dbm - floor_dbm + 3.0) * shape
            rssi = quantize_rssi(rssi + rng.gauss(0.0, noise_sigma))
            if rssi >= floor_dbm:
                samples.append(RssiSample(int(round(t * 1e6)), rssi))
    return samples


def generate_walk(
    profile: WalkProfile,
    params: DetectionParams = DetectionParams(),
    floor_dbm: Optional[float] = None,
) -> GeneratedWalk:
    """Simulate straight-line motion past antennas at x=0 and x=distance_m.

    Per-antenna samples are taken at the profile's rate (the exit antenna a
    half period out of phase so timestamps never collide), with model RSSI
    plus seeded Gaussian noise; samples below the floor are dropped. False
    peaks are injected into the entry trace before the main approach.
    """
    if floor_dbm is None:
        floor_dbm = DETECTABILITY_FLOOR_DBM
    rng = random.Random(profile.seed)
    dt = 1.0 / profile.sample_rate_hz
    v = profile.speed_mps
    h = profile.lateral_offset_m
    d_m = params.distance_m

    walk_start_s = 0.0
    if profile.false_peaks:
        walk_start_s = max(t + d for t, d, _ in profile.false_peaks) + 1.0

    trace1 = _false_peak_samples(
        profile.false_peaks, profile.sample_rate_hz, rng,
        profile.noise_sigma_dbm, floor_dbm,
    )
    trace2: list[RssiSample] = []

    # simulate until the tag has left the exit antenna's read zone
    zone_radius = REFERENCE_DISTANCE_M * 10 ** (
        (REFERENCE_RSSI_DBM - floor_dbm) / (10 * PATH_LOSS_EXPONENT)
    )
    end_x = d_m + zone_radius + 0.5
    duration_s = (end_x - profile.start_x_m) / v

    for antenna_x, phase, out in ((0.0, 0.0, trace1), (d_m, 0.5 * dt, trace2)):
        t = walk_start_s + phase
        while t <= walk_start_s + duration_s:
            x = profile.start_x_m + v * (t - walk_start_s)
            dist = math.hypot(x - antenna_x, h)
            rssi = rssi_model(dist) + profile.gain_offset_dbm
            rssi = quantize_rssi(rssi + rng.gauss(0.0, profile.noise_sigma_dbm))
            if rssi >= floor_dbm:
                out.append(RssiSample(int(round(t * 1e6)), rssi))
            t += dt

    t1_us = int(round((walk_start_s + (0.0 - profile.start_x_m) / v) * 1e6))
    t2_us = t1_us + int(round(d_m / v * 1e6))
    truth = GroundTruth(true_t1_us=t1_us, true_t2_us=t2_us, true_speed_mps=v)

    walk_entry = [s for s in trace1 if s.timestamp_us >= int(walk_start_s * 1e6)]
    warning = len(walk_entry) < params.w1
    return GeneratedWalk(trace1=trace1, trace2=trace2, truth=truth,
                         low_sample_warning=warning)


# ---------------------------------------------------------------------------
# Capture files: one JSON header line with ground truth, then one read per
# line using the gateway wire keys.
# ---------------------------------------------------------------------------

def write_capture(path: Path, walk: GeneratedWalk, profile: WalkProfile,
                  params: DetectionParams, epc: str = SIM_EPC) -> None:
    header = {
        "schemaVersion": 1,
        "groundTruth": {
            "trueT1Us": walk.truth.true_t1_us,
            "trueT2Us": walk.truth.true_t2_us,
            "trueSpeedMps": walk.truth.true_speed_mps,
        },
        "profile": asdict(profile),
        "params": asdict(params),
        "lowSampleWarning": walk.low_sample_warning,
    }
    reads = [
        {"epc": epc, "antennaPort": port, "timestampUs": s.timestamp_us,
         "rssi": s.rssi_dbm}
        for port, tr in ((ENTRY_PORT, walk.trace1), (EXIT_PORT, walk.trace2))
        for s in tr
    ]
    reads.sort(key=lambda r: r["timestampUs"])
    with path.open("w", encoding="utf-8") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for r in reads:
            f.write(json.dumps(r, sort_keys=True) + "\n")


@dataclass
class Capture:
    header: dict
    reads: list[dict]

    @property
    def truth(self) -> GroundTruth:
        gt = self.header["groundTruth"]
        return GroundTruth(gt["trueT1Us"], gt["trueT2Us"], gt["trueSpeedMps"])

    def trace(self, port: int) -> list[RssiSample]:
        return [RssiSample(r["timestampUs"], r["rssi"])
                for r in self.reads if r["antennaPort"] == port]


def read_capture(path: Path) -> Capture:
    with path.open(encoding="utf-8") as f:
        header = json.loads(f.readline())
        reads = [json.loads(line) for line in f if line.strip()]
    return Capture(header=header, reads=reads)


# ---------------------------------------------------------------------------
# Corpus generation
# ---------------------------------------------------------------------------

def generate_corpus(
    n: int,
    speed_range: tuple[float, float],
    seed: int,
    out_dir: Path,
    params: DetectionParams = DetectionParams(),
    noise_sigma_dbm: Optional[float] = None,
    lateral_offset_m: Optional[float] = None,
    gain_spread_dbm: float = 0.4,
) -> Path:
    """Write n capture files plus a manifest; fully deterministic in seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    entries = []
    for i in range(n):
        speed = rng.uniform(*speed_range)
        n_false = rng.randrange(0, 4)
        peaks = []
        t = 0.5
        for _ in range(n_false):
            duration = rng.uniform(0.5, 1.5)
            peaks.append((round(t, 3), round(duration, 3),
                          round(rng.uniform(-52.0, -45.0), 2)))
            t += duration + rng.uniform(0.3, 0.8)
        overrides = {}
        if noise_sigma_dbm is not None:
            overrides["noise_sigma_dbm"] = noise_sigma_dbm
        if lateral_offset_m is not None:
            overrides["lateral_offset_m"] = lateral_offset_m
        profile = WalkProfile(
            speed_mps=round(speed, 4),
            gain_offset_dbm=round(rng.uniform(-gain_spread_dbm, gain_spread_dbm), 3),
            false_peaks=tuple(peaks),
            seed=rng.randrange(2**31),
            **overrides,
        )
        walk = generate_walk(profile, params)
        name = f"walk_{i:03d}.jsonl"
        write_capture(out_dir / name, walk, profile, params)
        entries.append({
            "file": name,
            "trueSpeedMps": walk.truth.true_speed_mps,
            "trueT1Us": walk.truth.true_t1_us,
            "trueT2Us": walk.truth.true_t2_us,
            "falsePeaks": len(peaks),
            "lowSampleWarning": walk.low_sample_warning,
        })
    manifest = {"schemaVersion": 1, "seed": seed, "n": n,
                "speedRange": list(speed_range), "params": asdict(params),
                "walks": entries}
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    return manifest_path


def load_corpus(corpus_dir: Path) -> list[Capture]:
    manifest = json.loads((corpus_dir / "manifest.json").read_text())
    return [read_capture(corpus_dir / w["file"]) for w in manifest["walks"]]


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------

def replay(
    capture_path: Path,
    target: str,
    time_scale: float = 1.0,
    batch_window_s: float = 0.1,
    client: Optional[httpx.Client] = None,
) -> int:
    """POST a capture's reads to a service in original-timestamp batches.

    Reads are grouped on batch_window_s boundaries of their original
    timestamps; inter-batch gaps are slept scaled by time_scale (0 sends
    back-to-back). Returns the number of batches sent. Connection failures
    are retried 3 times before aborting.
    """
    capture = read_capture(capture_path)
    reads = sorted(capture.reads, key=lambda r: r["timestampUs"])
    if not reads:
        return 0
    window_us = int(batch_window_s * 1e6)
    batches: list[list[dict]] = []
    batch_start = reads[0]["timestampUs"]
    current: list[dict] = []
    for r in reads:
        if r["timestampUs"] - batch_start >= window_us and current:
            batches.append(current)
            current = []
            batch_start = r["timestampUs"]
        current.append(r)
    if current:
        batches.append(current)

    own_client = client is None
    http = client or httpx.Client(timeout=10.0)
    url = target.rstrip("/") + "/api/reads"
    sent = 0
    prev_ts = batches[0][0]["timestampUs"]
    try:
        for batch in batches:
            if time_scale > 0:
                gap_s = (batch[0]["timestampUs"] - prev_ts) * 1e-6 * time_scale
                if gap_s > 0:
                    time.sleep(gap_s)
            prev_ts = batch[0]["timestampUs"]
            last_error: Optional[Exception] = None
            for _ in range(3):
                try:
                    resp = http.post(url, json={"reads": batch})
                    resp.raise_for_status()
                    last_error = None
                    break
                except httpx.HTTPError as exc:
                    last_error = exc
            if last_error is not None:
                raise ReplayError(
                    f"aborting after 3 attempts; sent {sent}/{len(batches)} batches"
                ) from last_error
            sent += 1
    finally:
        if own_client:
            http.close()
    return sent


class ReplayError(RuntimeError):
    """Replay aborted before all batches were delivered."""
