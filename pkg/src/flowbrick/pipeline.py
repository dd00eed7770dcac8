"""Windowed monitoring pipeline: records in, data products and alerts out.

One pass drives everything from a single stream of per-window record
batches: the traffic matrix and the majority sketch accumulate every
record, and at each window boundary the emitted snapshot fans out to the
enabled detectors. Detector state for window t is always folded before
window t+1 starts, so results are independent of how the caller buffers
the input.

Products are JSON lines, one object per line, written per run:

  bricks.jsonl     per-window cell matrix (run-length coded) + marginals
  hitters.jsonl    per-window top-K majority-vote candidates
  tail.jsonl       per-window smoothed tail state per array
  alerts.jsonl     every fired alert, with ranked culprit handoff
  community.jsonl  per-window degree baselines and clique size

A detector failure on one window is logged and skipped; the run
continues. All randomness (synthetic input, Monte Carlo thresholds)
derives from the single master seed, so a rerun with the same config
reproduces every product byte for byte.
"""

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

from .databrick import Databrick, snapshot_record
from .detect_community import (
    CommunityDetector,
    build_topn,
    co_connectivity,
    max_clique_size,
)
from .detect_frechet import FrechetDetector
from .detect_relvol import EwmaZChart, RelVolDetector
from .errors import ConfigError
from .heavy_hitters import BmSketch, batch_keys, report_record, split_composite
from .ingest import batch_windows, generate_batches, parse_flow_file, WindowSpec

logger = logging.getLogger(__name__)

DETECTOR_NAMES = ("frechet", "relvol", "community", "clique")

_NONE = "none"


def _fmt(v):
    if v is None:
        return _NONE
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _opt(parse):
    return lambda s: None if s == _NONE else parse(s)


_PARSERS = {
    "m": int,
    "m_prime": int,
    "hash_seed": int,
    "seed": int,
    "windows": int,
    "rate": int,
    "tail_alpha": float,
    "input_path": _opt(str),
    "window_seconds": float,
    "window_records": _opt(int),
    "value_kind": str,
    "key_mode": str,
    "top_k": int,
    "detectors": lambda s: tuple(x for x in s.split(",") if x),
    "p0_frechet": float,
    "p0_relvol": float,
    "p0_community": float,
    "lam": float,
    "lam_community": float,
    "lam_p": float,
    "chart_L": float,
    "k": int,
    "mc_reps": int,
    "relvol_array": str,
    "topn": int,
    "clique_threshold": int,
    "clique_limit": int,
    "grace_windows": int,
    "output_dir": str,
}


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of one run, in one flat record.

    The synthetic input fields (seed, windows, rate, tail_alpha) apply
    when input_path is unset; a set input_path switches the run to file
    input and the windowing fields take over. Detector parameters map
    one-to-one onto the constructor arguments of the owning components,
    which perform the range validation beyond the basic checks here.
    """

    # binning
    m: int = 128
    m_prime: int = 256
    hash_seed: int = 1
    # input
    seed: int = 1
    windows: int = 60
    rate: int = 2000
    tail_alpha: float = 1.6
    input_path: str | None = None
    window_seconds: float = 10.0
    window_records: int | None = None
    value_kind: str = "bytes"
    # heavy hitters
    key_mode: str = "src_dst"
    top_k: int = 10
    # detectors
    detectors: tuple = ("frechet", "relvol", "community")
    p0_frechet: float = 0.95
    p0_relvol: float = 0.95
    p0_community: float = 0.9999
    lam: float = 0.5
    lam_community: float = 0.5
    lam_p: float = 0.6
    chart_L: float = 1.64
    k: int = 3
    mc_reps: int = 4000
    relvol_array: str = "dst"
    topn: int = 3000
    clique_threshold: int = 1
    clique_limit: int = 256
    # evaluation
    grace_windows: int = 18
    output_dir: str = "runs"

    def __post_init__(self):
        object.__setattr__(self, "detectors", tuple(self.detectors))
        for name, lo in (("m", 2), ("m_prime", 1), ("top_k", 1), ("k", 1),
                         ("mc_reps", 1), ("topn", 1), ("windows", 0),
                         ("rate", 0), ("grace_windows", 0),
                         ("clique_threshold", 1), ("clique_limit", 1)):
            if getattr(self, name) < lo:
                raise ConfigError("%s must be >= %d, got %r" % (name, lo, getattr(self, name)))
        for name in ("p0_frechet", "p0_relvol", "p0_community"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError("%s must lie in (0, 1)" % name)
        for name in ("lam", "lam_community", "lam_p"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ConfigError("%s must lie in (0, 1]" % name)
        if self.value_kind not in ("bytes", "packets"):
            raise ConfigError("value_kind must be 'bytes' or 'packets'")
        if self.key_mode not in ("src_dst", "src", "dst"):
            raise ConfigError("key_mode must be one of src_dst, src, dst")
        if self.relvol_array not in ("src", "dst"):
            raise ConfigError("relvol_array must be 'src' or 'dst'")
        unknown = set(self.detectors) - set(DETECTOR_NAMES)
        if unknown:
            raise ConfigError("unknown detectors: %s" % ", ".join(sorted(unknown)))
        if not (self.window_seconds > 0 and math.isfinite(self.window_seconds)):
            raise ConfigError("window_seconds must be positive and finite")
        if self.window_records is not None and self.window_records < 1:
            raise ConfigError("window_records must be >= 1 when set")
        if not self.tail_alpha > 0:
            raise ConfigError("tail_alpha must be positive")

    def window_spec(self):
        return WindowSpec(duration=self.window_seconds,
                          value_kind=self.value_kind,
                          records=self.window_records)

    def to_file(self, path):
        """Persist as key=value lines; from_file restores it losslessly."""
        lines = ["%s=%s" % (f.name, _fmt(getattr(self, f.name)))
                 for f in dataclasses.fields(self)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_file(cls, path):
        kw = {}
        for line_no, raw in enumerate(
                Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ConfigError("line %d: expected key=value, got %r" % (line_no, raw))
            key = key.strip()
            parse = _PARSERS.get(key)
            if parse is None:
                raise ConfigError("line %d: unknown config key %r" % (line_no, key))
            try:
                kw[key] = parse(val.strip())
            except ValueError as e:
                raise ConfigError("line %d: bad value for %s: %s" % (line_no, key, e)) from e
        return cls(**kw)


@dataclass
class RunSummary:
    """Counters of one completed run."""

    windows: int = 0
    records: int = 0
    elapsed: float = 0.0
    alerts: dict = field(default_factory=dict)
    detector_errors: int = 0

    @property
    def records_per_sec(self):
        return self.records / self.elapsed if self.elapsed > 0 else 0.0

    def to_json_dict(self):
        return {
            "windows": self.windows,
            "records": self.records,
            "elapsed_sec": self.elapsed,
            "records_per_sec": self.records_per_sec,
            "alerts": dict(self.alerts),
            "detector_errors": self.detector_errors,
        }


def _dump(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class _Products:
    """JSON-lines writers for one run directory (no-ops when dir is None)."""

    NAMES = ("bricks", "hitters", "tail", "alerts", "community")

    def __init__(self, out_dir):
        self._files = {}
        if out_dir is not None:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            for name in self.NAMES:
                self._files[name] = open(out_dir / ("%s.jsonl" % name),
                                         "w", encoding="utf-8")

    def write(self, name, rec):
        fh = self._files.get(name)
        if fh is not None:
            fh.write(_dump(rec) + "\n")

    def close(self):
        for fh in self._files.values():
            fh.close()
        self._files.clear()


def identify_handoff(alert, entries, h, key_mode="src_dst"):
    """Majority-vote candidates that land in an alert's flagged bins.

    The candidate key component matching the alert's array (destination
    for dst/in_degree alerts, source for src/out_degree) is hashed with
    the brick's bin hash; candidates inside a flagged bin are returned
    in the report's order, i.e. ranked by estimated volume descending.
    An empty list means no sketch evidence for the flagged bins.
    """
    if not alert.bins:
        return []
    if alert.array in ("dst", "in_degree"):
        side = "dst"
    elif alert.array in ("src", "out_degree"):
        side = "src"
    else:
        return []
    flagged = set(int(b) for b in alert.bins)
    out = []
    for e in entries:
        if key_mode == "src_dst":
            s, d = split_composite(e.key)
            component = d if side == "dst" else s
        elif key_mode == side:
            component = e.key
        else:
            # sketch tracks the other key side: no evidence to offer
            return []
        if int(h(component)) in flagged:
            out.append(e)
    return out


def _handoff_json(entries):
    return [{"key": e.key, "est_volume": e.est_volume, "flag": e.flag,
             "substream": e.substream} for e in entries]


class _Detectors:
    """Enabled detector instances for one run."""

    def __init__(self, cfg):
        self.frechet = []
        self.relvol = None
        self.community = []
        self.clique = "clique" in cfg.detectors
        if "frechet" in cfg.detectors:
            for array in ("dst", "src"):
                self.frechet.append(FrechetDetector(
                    m=cfg.m, p0=cfg.p0_frechet, lam=cfg.lam, array=array))
        if "relvol" in cfg.detectors:
            self.relvol = RelVolDetector(
                m=cfg.m, k=cfg.k, p0=cfg.p0_relvol, lam=cfg.lam,
                mc_reps=cfg.mc_reps, seed=cfg.seed, array=cfg.relvol_array,
                chart=EwmaZChart(lam_p=cfg.lam_p, L=cfg.chart_L))
        if "community" in cfg.detectors or self.clique:
            self.community = [
                CommunityDetector(m=cfg.m, p0=cfg.p0_community,
                                  lam=cfg.lam_community, direction="in"),
                CommunityDetector(m=cfg.m, p0=cfg.p0_community,
                                  lam=cfg.lam_community, direction="out"),
            ]


def _input_batches(cfg, attacks):
    if cfg.input_path is not None:
        return batch_windows(parse_flow_file(cfg.input_path, cfg.window_spec()))
    return generate_batches(cfg.seed, cfg.windows, cfg.rate, attacks,
                            duration=cfg.window_seconds,
                            tail_alpha=cfg.tail_alpha)


def run(config, out_dir=None, *, batches=None, attacks=(), matrix_hook=None,
        sink=None):
    """Drive one full run; returns a RunSummary.

    batches: explicit (window, RecordBatch) iterable; defaults to the
        config's input (file when input_path is set, synthetic otherwise).
    attacks: AttackSpecs forwarded to the synthetic generator (ignored
        for explicit batches and file input).
    matrix_hook: callable (window, brick) applied after accumulation and
        before the window's snapshot, for direct matrix perturbations.
    sink: callable receiving every AlertEvent, fired or not.
    """
    brick = Databrick(config.m, config.hash_seed, config.value_kind)
    sketch = BmSketch(config.m, config.m_prime, config.hash_seed)
    try:
        dets = _Detectors(config)
    except ValueError as e:
        # component constructors reject what the flat checks cannot see
        # (for example m too small for the tail scale range)
        raise ConfigError(str(e)) from e
    if batches is None:
        batches = _input_batches(config, attacks)
    products = _Products(out_dir)
    if out_dir is not None:
        config.to_file(Path(out_dir) / "config.txt")
    summary = RunSummary()
    t0 = time.perf_counter()
    try:
        for w, batch in batches:
            summary.windows += 1
            summary.records += len(batch)
            brick.add_batch(batch)
            if len(batch):
                sketch.update_batch(batch_keys(batch, config.key_mode),
                                    batch.values(config.value_kind))
            if matrix_hook is not None:
                matrix_hook(w, brick)
            cells, arrays = brick.emit()
            entries = sketch.query(config.top_k)
            sketch.reset()
            products.write("bricks", snapshot_record(
                w, config.m, cells, arrays, config.value_kind))
            products.write("hitters", report_record(w, entries, config.key_mode))

            events = []
            for det in dets.frechet:
                x = arrays.dst if det.array == "dst" else arrays.src
                try:
                    ev = det.step(x, w)
                except Exception:
                    logger.warning("frechet/%s failed on window %d",
                                   det.array, w, exc_info=True)
                    summary.detector_errors += 1
                    continue
                events.append(ev)
                products.write("tail", {
                    "window": w, "array": det.array,
                    "threshold": ev.threshold, **ev.diagnostics})
            if dets.relvol is not None:
                x = arrays.dst if config.relvol_array == "dst" else arrays.src
                try:
                    events.extend(dets.relvol.step(x, w))
                except Exception:
                    logger.warning("relvol failed on window %d", w, exc_info=True)
                    summary.detector_errors += 1
            if dets.community:
                try:
                    g = build_topn(cells, config.topn)
                    ev_in = dets.community[0].step(g.in_degrees, w)
                    ev_out = dets.community[1].step(g.out_degrees, w)
                    if "community" in config.detectors:
                        events.extend((ev_in, ev_out))
                    rec = {"window": w, "edges": int(g.n)}
                    for tag, ev in (("in", ev_in), ("out", ev_out)):
                        rec[tag] = {
                            "mu": ev.diagnostics["mu"],
                            "sigma": ev.diagnostics["sigma"],
                            "degenerate": ev.diagnostics["degenerate"],
                            "threshold": (ev.threshold
                                          if math.isfinite(ev.threshold) else None),
                            "flagged": list(ev.bins),
                        }
                    if dets.clique:
                        cq = max_clique_size(co_connectivity(g), "dst",
                                             config.clique_threshold,
                                             config.clique_limit)
                        rec["clique"] = {"size": cq.size, "exact": cq.exact}
                    products.write("community", rec)
                except Exception:
                    logger.warning("community failed on window %d", w, exc_info=True)
                    summary.detector_errors += 1

            for ev in events:
                if sink is not None:
                    sink(ev)
                if not ev.fired:
                    continue
                summary.alerts[ev.detector] = summary.alerts.get(ev.detector, 0) + 1
                culprits = identify_handoff(ev, entries, brick.h, config.key_mode)
                products.write("alerts", {**ev.to_json_dict(),
                                          "handoff": _handoff_json(culprits)})
    finally:
        products.close()
    summary.elapsed = time.perf_counter() - t0
    return summary
