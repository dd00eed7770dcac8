"""Injection harness: episode recall and window precision over seeded trials.

Each trial generates its own synthetic stream from a per-trial sub-seed,
injects the given attack episodes, and replays the stream through the
pipeline once per (p0, lambda) combination. Reusing the materialized
batches across combinations means a parameter sweep compares detectors
on byte-identical traffic.

Scoring: a fired window inside any attack's [start, end + grace] range
counts as a true positive for precision; an episode counts as detected
when some fired window lands in its range. With target-bin matching
enabled, only alerts on the attack's own array that include the hashed
target bin count toward recall, which separates genuine catches from
coincident background flags. A detector that never fires scores
precision 0 by convention.
"""

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ConfigError
from .hashing import STREAM_BRICK, STREAM_TRIAL, derive_seed, make_hash
from .ingest import generate_batches
from .pipeline import run

# alert arrays that an attack kind can legitimately light up
_SIDE_ARRAYS = {"dst": ("dst", "in_degree"), "src": ("src", "out_degree")}


def trial_seed(master, trial):
    """Stream seed of one evaluation trial."""
    return derive_seed(master, STREAM_TRIAL, trial)


def _attack_side(attack):
    if attack.kind == "many_to_one":
        return "dst"
    if attack.kind == "one_to_many":
        return "src"
    return None  # many_to_many has no single anchored bin


def episode_range(attack, grace, n_windows):
    """Windows in which an alert counts as detecting this episode."""
    last = min(attack.end_window + grace, n_windows - 1)
    return range(attack.start_window, last + 1)


def truth_windows(attacks, grace, n_windows):
    """Union of all episode ranges: the ground-truth positive windows."""
    out = set()
    for a in attacks:
        out.update(episode_range(a, grace, n_windows))
    return frozenset(out)


@dataclass(frozen=True)
class EvalRow:
    """Averaged metrics of one (detector, array, parameter) combination."""

    detector: str
    array: str
    p0: float
    lam: float
    precision: float
    recall: float
    tp: int
    fp: int
    detected: int
    episodes: int

    def to_json_dict(self):
        return {k: getattr(self, k) for k in (
            "detector", "array", "p0", "lam", "precision", "recall",
            "tp", "fp", "detected", "episodes")}


@dataclass(frozen=True)
class EvalResult:
    """All rows of one evaluation.

    truth holds the positive windows of the last trial; for a fixed
    attack list (the usual case) every trial shares the same set.
    """

    rows: tuple
    grace_windows: int
    trials: int
    truth: tuple

    def row(self, detector, array, p0=None, lam=None):
        hits = [r for r in self.rows
                if r.detector == detector and r.array == array
                and (p0 is None or r.p0 == p0)
                and (lam is None or r.lam == lam)]
        if len(hits) != 1:
            raise KeyError("row lookup matched %d rows" % len(hits))
        return hits[0]


def _row_keys(config):
    keys = []
    if "frechet" in config.detectors:
        keys += [("frechet", "dst"), ("frechet", "src")]
    if "relvol" in config.detectors:
        keys += [("relvol", config.relvol_array),
                 ("relvol_chart", config.relvol_array)]
    if "community" in config.detectors:
        keys += [("community", "in_degree"), ("community", "out_degree")]
    keys.append(("any", "any"))
    return keys


def _covers(ev, attack, grace, n_windows, target_bin, strict):
    if ev.window not in episode_range(attack, grace, n_windows):
        return False
    if not strict:
        return True
    side = _attack_side(attack)
    if side is None:
        return True  # no anchored bin: window overlap is the best evidence
    return ev.array in _SIDE_ARRAYS[side] and target_bin in ev.bins


def evaluate(config, attacks, trials=1, grace_windows=None, param_grid=None,
             out_dir=None, require_target_bin=False):
    """Run the injection protocol; returns an EvalResult.

    attacks: list of AttackSpec, or callable (trial, stream_seed) -> list
        for magnitude schedules that depend on each trial's baseline.
    param_grid: (p0, lambda) pairs applied to the frechet and relvol
        detectors; defaults to the config's own values.
    require_target_bin: score recall only from matching-array alerts
        that include the attack target's hashed bin.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1, got %r" % (trials,))
    grace = config.grace_windows if grace_windows is None else grace_windows
    grid = param_grid or [(config.p0_frechet, config.lam)]
    keys = _row_keys(config)
    h = make_hash(derive_seed(config.hash_seed, STREAM_BRICK), config.m)
    fixed_attacks = None if callable(attacks) else list(attacks)

    # acc[(p0, lam, det, array)] -> [sum_precision, sum_recall, tp, fp, detected, episodes]
    acc = {(p0, lam, d, a): [0.0, 0.0, 0, 0, 0, 0]
           for p0, lam in grid for d, a in keys}
    alert_fh = None
    truth = frozenset()
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        alert_fh = open(out_dir / "eval_alerts.jsonl", "w", encoding="utf-8")
    try:
        for t in range(trials):
            seed = trial_seed(config.seed, t)
            trial_attacks = (attacks(t, seed) if callable(attacks)
                             else fixed_attacks)
            truth = truth_windows(trial_attacks, grace, config.windows)
            batches = list(generate_batches(
                seed, config.windows, config.rate, trial_attacks,
                duration=config.window_seconds, tail_alpha=config.tail_alpha))
            for p0, lam in grid:
                cfg = replace(config, seed=seed, p0_frechet=p0,
                              p0_relvol=p0, lam=lam)
                fired = []
                run(cfg, batches=batches, sink=lambda ev: ev.fired and fired.append(ev))
                if alert_fh is not None:
                    for ev in fired:
                        alert_fh.write(json.dumps(
                            {"trial": t, "p0": p0, "lam": lam,
                             **ev.to_json_dict()},
                            sort_keys=True, separators=(",", ":")) + "\n")
                bins = {id(a): (h(a.target_keys[0])
                                if _attack_side(a) is not None else None)
                        for a in trial_attacks}
                for det, arr in keys:
                    evs = [ev for ev in fired
                           if det == "any" or (ev.detector == det and ev.array == arr)]
                    windows = {ev.window for ev in evs}
                    tp = sum(1 for w in windows if w in truth)
                    fp = len(windows) - tp
                    precision = tp / len(windows) if windows else 0.0
                    detected = sum(
                        1 for a in trial_attacks
                        if any(_covers(ev, a, grace, config.windows,
                                       bins[id(a)], require_target_bin)
                               for ev in evs))
                    recall = (detected / len(trial_attacks)
                              if trial_attacks else 0.0)
                    slot = acc[(p0, lam, det, arr)]
                    slot[0] += precision
                    slot[1] += recall
                    slot[2] += tp
                    slot[3] += fp
                    slot[4] += detected
                    slot[5] += len(trial_attacks)
    finally:
        if alert_fh is not None:
            alert_fh.close()

    rows = tuple(
        EvalRow(detector=d, array=a, p0=p0, lam=lam,
                precision=acc[(p0, lam, d, a)][0] / trials,
                recall=acc[(p0, lam, d, a)][1] / trials,
                tp=acc[(p0, lam, d, a)][2], fp=acc[(p0, lam, d, a)][3],
                detected=acc[(p0, lam, d, a)][4],
                episodes=acc[(p0, lam, d, a)][5])
        for p0, lam in grid for d, a in keys)
    result = EvalResult(rows=rows, grace_windows=grace, trials=trials,
                        truth=tuple(sorted(truth)))
    if out_dir is not None:
        payload = {
            "grace_windows": result.grace_windows,
            "trials": result.trials,
            "truth_windows": list(result.truth),
            "rows": [r.to_json_dict() for r in result.rows],
        }
        (out_dir / "eval_results.json").write_text(
            json.dumps(payload, sort_keys=True, indent=1) + "\n",
            encoding="utf-8")
    return result
