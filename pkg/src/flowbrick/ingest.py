"""Flow-record input: CSV parsing, windowing, and synthetic generation.

A flow record is (timestamp, src, dst, bytes, packets) with 32-bit
integer keys. Records enter the engine grouped into consecutive
windows, either by elapsed time (`duration` seconds, window 0 starting
at the first record's timestamp) or by fixed record count.

The synthetic generator is fully deterministic given its seed: baseline
traffic draws uniformly random key pairs with heavy-tailed byte sizes,
and configured attack episodes add their volume on top. Baseline and
attack records come from separate seed streams, so the baseline portion
of a run is bit-identical with and without attacks enabled.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputFormatError, StreamOrderError
from .hashing import derive_seed

KEY_SPACE = 1 << 32

ATTACK_KINDS = ("many_to_one", "one_to_many", "many_to_many")

# seed stream tags used by the generator
_BASE_STREAM = 0
_ATTACK_STREAM = 1

_MTU = 1500  # bytes per packet when deriving packet counts


@dataclass
class FlowRecord:
    """One observed flow aggregate.

    Attributes:
        timestamp: seconds, non-negative; non-decreasing within a stream.
        src: source key, integer in [0, 2**32).
        dst: destination key, integer in [0, 2**32).
        bytes: non-negative byte volume.
        packets: non-negative packet count.
    """

    timestamp: float
    src: int
    dst: int
    bytes: int
    packets: int

    def __post_init__(self):
        if not math.isfinite(self.timestamp) or self.timestamp < 0:
            raise ValueError("timestamp must be finite and >= 0, got %r" % (self.timestamp,))
        for name in ("src", "dst"):
            k = getattr(self, name)
            if not (0 <= k < KEY_SPACE):
                raise ValueError("%s key out of 32-bit range: %r" % (name, k))
        if self.bytes < 0:
            raise ValueError("bytes must be >= 0, got %r" % (self.bytes,))
        if self.packets < 0:
            raise ValueError("packets must be >= 0, got %r" % (self.packets,))


@dataclass(frozen=True)
class WindowSpec:
    """How records are grouped into windows.

    duration: window length in seconds (used when records is None).
    value_kind: which field the traffic matrix accumulates.
    records: when set, group by fixed record count instead of time.
    """

    duration: float = 10.0
    value_kind: str = "bytes"
    records: int | None = None

    def __post_init__(self):
        if self.records is None:
            if not (self.duration > 0 and math.isfinite(self.duration)):
                raise ValueError("window duration must be positive, got %r" % (self.duration,))
        elif self.records < 1:
            raise ValueError("records per window must be >= 1, got %r" % (self.records,))
        if self.value_kind not in ("bytes", "packets"):
            raise ValueError("value_kind must be 'bytes' or 'packets', got %r" % (self.value_kind,))


@dataclass(frozen=True)
class AttackSpec:
    """One synthetic attack episode.

    kind: many_to_one (random sources -> fixed destination),
          one_to_many (fixed source -> random destinations), or
          many_to_many (random pairs among target_keys).
    magnitude: exact byte volume added per active window.
    start_window, end_window: inclusive active range.
    target_keys: fixed keys involved (1 key for the *_to_one/one_to_*
                 kinds; at least 2 for many_to_many).
    fanout: number of attack records per active window.
    """

    kind: str
    magnitude: int
    start_window: int
    end_window: int
    target_keys: tuple = ()
    fanout: int = 20

    def __post_init__(self):
        object.__setattr__(self, "target_keys", tuple(self.target_keys))
        if self.kind not in ATTACK_KINDS:
            raise ValueError("unknown attack kind %r" % (self.kind,))
        if self.magnitude < 1:
            raise ValueError("attack magnitude must be >= 1, got %r" % (self.magnitude,))
        if self.start_window < 0 or self.end_window < self.start_window:
            raise ValueError("attack window range [%r, %r] is invalid"
                             % (self.start_window, self.end_window))
        if self.fanout < 1:
            raise ValueError("attack fanout must be >= 1, got %r" % (self.fanout,))
        need = 2 if self.kind == "many_to_many" else 1
        if len(self.target_keys) < need:
            raise ValueError("%s needs at least %d target key(s)" % (self.kind, need))
        for k in self.target_keys:
            if not (0 <= k < KEY_SPACE):
                raise ValueError("target key out of 32-bit range: %r" % (k,))


@dataclass
class RecordBatch:
    """All records of one window as parallel arrays (fast path)."""

    timestamp: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    bytes: np.ndarray
    packets: np.ndarray

    def __len__(self):
        return self.timestamp.shape[0]

    def values(self, value_kind):
        return self.bytes if value_kind == "bytes" else self.packets

    def records(self):
        for i in range(len(self)):
            yield FlowRecord(float(self.timestamp[i]), int(self.src[i]),
                             int(self.dst[i]), int(self.bytes[i]),
                             int(self.packets[i]))


def _empty_batch():
    return RecordBatch(np.empty(0), np.empty(0, np.uint64), np.empty(0, np.uint64),
                       np.empty(0, np.int64), np.empty(0, np.int64))


def parse_key(text):
    """Parse a key field: dotted-quad IPv4 or a plain decimal integer."""
    if "." in text:
        parts = text.split(".")
        if len(parts) != 4:
            raise ValueError("dotted-quad key needs 4 octets: %r" % (text,))
        k = 0
        for p in parts:
            octet = int(p)
            if not (0 <= octet <= 255):
                raise ValueError("octet out of range in %r" % (text,))
            k = (k << 8) | octet
        return k
    k = int(text)
    if not (0 <= k < KEY_SPACE):
        raise ValueError("key out of 32-bit range: %r" % (text,))
    return k


def key_repr(key):
    """Dotted-quad rendering of a 32-bit key."""
    return "%d.%d.%d.%d" % (key >> 24 & 255, key >> 16 & 255, key >> 8 & 255, key & 255)


def _looks_like_header(line):
    first = line.split(",")[0].strip()
    try:
        float(first)
        return False
    except ValueError:
        return True


def parse_flow_file(path, window=WindowSpec()):
    """Stream (window_index, FlowRecord) pairs from a CSV file.

    Expected columns: timestamp,src,dst,bytes,packets. A header line is
    skipped when its first field is non-numeric. Malformed lines raise
    InputFormatError with the offending line number; decreasing
    timestamps raise StreamOrderError.
    """
    t0 = None
    prev_t = None
    ordinal = 0
    with open(path, "r", encoding="ascii") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line_no == 1 and _looks_like_header(line):
                continue
            fields = line.split(",")
            if len(fields) != 5:
                raise InputFormatError("expected 5 fields, got %d" % len(fields), line_no)
            try:
                rec = FlowRecord(timestamp=float(fields[0]),
                                 src=parse_key(fields[1].strip()),
                                 dst=parse_key(fields[2].strip()),
                                 bytes=int(fields[3]),
                                 packets=int(fields[4]))
            except ValueError as e:
                raise InputFormatError(str(e), line_no) from e
            if prev_t is not None and rec.timestamp < prev_t:
                raise StreamOrderError("timestamp decreased (%r after %r)"
                                       % (rec.timestamp, prev_t), line_no)
            prev_t = rec.timestamp
            if t0 is None:
                t0 = rec.timestamp
            if window.records is not None:
                wi = ordinal // window.records
            else:
                wi = int(math.floor((rec.timestamp - t0) / window.duration))
            ordinal += 1
            yield wi, rec


def batch_windows(stream, n_windows=None):
    """Group a (window_index, FlowRecord) stream into per-window batches.

    Yields (window_index, RecordBatch) for every window from 0 through
    the last seen index (empty batches fill gaps). With n_windows set,
    trailing empty windows are emitted up to that count.
    """
    current = 0
    seen = False
    buf = ([], [], [], [], [])

    def flush():
        if buf[0]:
            batch = RecordBatch(np.array(buf[0], float),
                                np.array(buf[1], np.uint64),
                                np.array(buf[2], np.uint64),
                                np.array(buf[3], np.int64),
                                np.array(buf[4], np.int64))
            for b in buf:
                b.clear()
            return batch
        return _empty_batch()

    for wi, rec in stream:
        seen = True
        while wi > current:
            yield current, flush()
            current += 1
        buf[0].append(rec.timestamp)
        buf[1].append(rec.src)
        buf[2].append(rec.dst)
        buf[3].append(rec.bytes)
        buf[4].append(rec.packets)
    if seen:
        yield current, flush()
        current += 1
    if n_windows is not None:
        while current < n_windows:
            yield current, _empty_batch()
            current += 1


def _split_exact(total, parts):
    """Split an integer into `parts` pieces that sum to it exactly."""
    base, rem = divmod(int(total), parts)
    out = np.full(parts, base, dtype=np.int64)
    out[:rem] += 1
    return out


def _packets_for(byte_sizes):
    return np.maximum(1, -(-byte_sizes // _MTU))


def _baseline_arrays(seed, w, rate, duration, tail_alpha):
    rng = np.random.default_rng(derive_seed(seed, _BASE_STREAM, w))
    ts = np.sort(rng.random(rate)) * duration + w * duration
    src = rng.integers(0, KEY_SPACE, rate, dtype=np.uint64)
    dst = rng.integers(0, KEY_SPACE, rate, dtype=np.uint64)
    # inverse-CDF draw: P(X > x) = x**-alpha for x >= 1, floored to int bytes
    x = (1.0 - rng.random(rate)) ** (-1.0 / tail_alpha)
    byte_sizes = np.floor(x).astype(np.int64)
    return ts, src, dst, byte_sizes


def _attack_arrays(seed, w, a_ix, attack, duration):
    rng = np.random.default_rng(derive_seed(seed, _ATTACK_STREAM, w, a_ix))
    n = attack.fanout
    ts = np.sort(rng.random(n)) * duration + w * duration
    if attack.kind == "many_to_one":
        src = rng.integers(0, KEY_SPACE, n, dtype=np.uint64)
        dst = np.full(n, attack.target_keys[0], dtype=np.uint64)
    elif attack.kind == "one_to_many":
        src = np.full(n, attack.target_keys[0], dtype=np.uint64)
        dst = rng.integers(0, KEY_SPACE, n, dtype=np.uint64)
    else:
        keys = np.array(attack.target_keys, dtype=np.uint64)
        src = rng.choice(keys, n)
        dst = rng.choice(keys, n)
    byte_sizes = _split_exact(attack.magnitude, n)
    return ts, src, dst, byte_sizes


def generate_batches(seed, n_windows, rate, attacks=(), *, duration=10.0,
                     tail_alpha=1.6):
    """Yield (window_index, RecordBatch) for a synthetic run.

    Every window holds exactly `rate` baseline records plus the records
    of attacks active in it. Records within a window are sorted by
    timestamp. Identical seeds reproduce identical streams.
    """
    if n_windows < 0:
        raise ValueError("n_windows must be >= 0")
    if rate < 0:
        raise ValueError("rate must be >= 0")
    for w in range(n_windows):
        parts = []
        if rate:
            parts.append(_baseline_arrays(seed, w, rate, duration, tail_alpha))
        for a_ix, attack in enumerate(attacks):
            if attack.start_window <= w <= attack.end_window:
                parts.append(_attack_arrays(seed, w, a_ix, attack, duration))
        if not parts:
            yield w, _empty_batch()
            continue
        ts = np.concatenate([p[0] for p in parts])
        src = np.concatenate([p[1] for p in parts])
        dst = np.concatenate([p[2] for p in parts])
        byte_sizes = np.concatenate([p[3] for p in parts])
        order = np.argsort(ts, kind="stable")
        ts, src, dst, byte_sizes = ts[order], src[order], dst[order], byte_sizes[order]
        yield w, RecordBatch(ts, src, dst, byte_sizes, _packets_for(byte_sizes))


def generate_synthetic(seed, n_windows, rate, attacks=(), *, duration=10.0,
                       tail_alpha=1.6):
    """Record-level view of generate_batches: yields (window_index, FlowRecord)."""
    for w, batch in generate_batches(seed, n_windows, rate, attacks,
                                     duration=duration, tail_alpha=tail_alpha):
        for rec in batch.records():
            yield w, rec


def write_csv(path, batches, header=True):
    """Write (window_index, RecordBatch) pairs to a flow CSV file."""
    with open(path, "w", encoding="ascii") as fh:
        if header:
            fh.write("timestamp,src,dst,bytes,packets\n")
        for _, batch in batches:
            for i in range(len(batch)):
                # repr round-trips floats exactly, keeping window
                # assignment identical after a write/parse cycle
                fh.write("%r,%d,%d,%d,%d\n"
                         % (float(batch.timestamp[i]), batch.src[i],
                            batch.dst[i], batch.bytes[i], batch.packets[i]))
