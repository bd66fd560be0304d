"""Discrete-event simulation of the latency war.

An opportunity appears at an origin region. Every bot instance hears about it
after the origin-to-instance propagation delay, computes for
``compute_delay_ms`` and submits; the submission reaches the validator after
the instance-to-validator delay. Arrival order at the validator is the only
ordering rule: the first submission wins, every later one reverts.

Randomness is split into independent streams keyed by ``(seed, opportunity,
searcher)`` so that appending an instance to one searcher leaves every other
draw unchanged.
"""

from __future__ import annotations

import heapq
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from latwar.errors import InvalidConfig
from latwar.io import load_config
from latwar.latency.analyze import ArrivalRecord
from latwar.latency.geo import Region, haversine_km, load_regions, shipped_regions

_ORIGIN_STREAM = 1
_ATTEMPT_STREAM = 2

ROTATE = "rotate"
UNIFORM = "uniform"


@dataclass(frozen=True)
class LatencyModel:
    base_ms: float = 5.0
    ms_per_km: float = 0.02
    jitter_ms: float = 0.0  # scale of the half-normal jitter added per hop

    def delay(self, km: float, jitter: float = 0.0) -> float:
        return self.base_ms + self.ms_per_km * km + jitter


@dataclass(frozen=True)
class SearcherSpec:
    id: str
    instance_regions: tuple[str, ...]
    compute_delay_ms: float = 0.0


@dataclass(frozen=True)
class SimConfig:
    seed: int
    regions: tuple[Region, ...]
    latency_model: LatencyModel
    searchers: tuple[SearcherSpec, ...]
    n_opportunities: int
    opportunity_origin: Any = UNIFORM  # "uniform" or {region: weight}
    validator_region: Any = ROTATE  # region name, "rotate", or a list of names to rotate over
    opportunity_interval_ms: float = 1000.0
    start_ms: int = 0
    profit_per_win: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regions"] = [asdict(r) for r in self.regions]
        d["searchers"] = [{**asdict(s), "instance_regions": list(s.instance_regions)} for s in self.searchers]
        if isinstance(self.validator_region, tuple):
            d["validator_region"] = list(self.validator_region)
        return d

    @classmethod
    def from_dict(cls, raw: Mapping, base_dir: str | Path | None = None) -> "SimConfig":
        return parse_config(raw, base_dir)


def _req(raw: Mapping, key: str, path: str):
    if key not in raw:
        raise InvalidConfig(f"{path}{key}", "missing")
    return raw[key]


def _num(value, path: str, minimum: float | None = None, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidConfig(path, f"expected a number, got {value!r}")
    if integer and not isinstance(value, int):
        raise InvalidConfig(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise InvalidConfig(path, f"must be >= {minimum}")
    return value


def parse_config(raw: Mapping, base_dir: str | Path | None = None) -> SimConfig:
    if not isinstance(raw, Mapping):
        raise InvalidConfig("<root>", "config must be a mapping")
    seed = _num(_req(raw, "seed", ""), "seed", 0, integer=True)

    reg_raw = _req(raw, "regions", "")
    try:
        if reg_raw == "shipped":
            regions = tuple(shipped_regions())
        elif isinstance(reg_raw, str):
            p = Path(reg_raw)
            if base_dir is not None and not p.is_absolute():
                p = Path(base_dir) / p
            regions = tuple(load_regions(p))
        elif isinstance(reg_raw, list):
            regions = []
            for i, r in enumerate(reg_raw):
                try:
                    regions.append(Region(str(r["name"]), float(r["lat"]), float(r["lon"])))
                except (KeyError, TypeError, ValueError) as exc:
                    raise InvalidConfig(f"regions[{i}]", str(exc)) from exc
            regions = tuple(regions)
        else:
            raise InvalidConfig("regions", "expected 'shipped', a CSV path, or a list")
    except (OSError, ValueError) as exc:
        raise InvalidConfig("regions", str(exc)) from exc
    if not regions:
        raise InvalidConfig("regions", "at least one region required")
    names = [r.name for r in regions]
    if len(set(names)) != len(names):
        raise InvalidConfig("regions", "duplicate region names")
    known = set(names)

    lm_raw = _req(raw, "latency_model", "")
    if not isinstance(lm_raw, Mapping):
        raise InvalidConfig("latency_model", "expected a mapping")
    lm = LatencyModel(
        base_ms=float(_num(_req(lm_raw, "base_ms", "latency_model."), "latency_model.base_ms", 0)),
        ms_per_km=float(_num(_req(lm_raw, "ms_per_km", "latency_model."), "latency_model.ms_per_km", 0)),
        jitter_ms=float(_num(_req(lm_raw, "jitter_ms", "latency_model."), "latency_model.jitter_ms", 0)),
    )

    s_raw = _req(raw, "searchers", "")
    if not isinstance(s_raw, list) or not s_raw:
        raise InvalidConfig("searchers", "at least one searcher required")
    searchers = []
    ids = set()
    for i, s in enumerate(s_raw):
        path = f"searchers[{i}]"
        if not isinstance(s, Mapping):
            raise InvalidConfig(path, "expected a mapping")
        sid = str(_req(s, "id", path + "."))
        if sid in ids:
            raise InvalidConfig(f"{path}.id", f"duplicate searcher id {sid!r}")
        ids.add(sid)
        inst = _req(s, "instance_regions", path + ".")
        if not isinstance(inst, list) or not inst:
            raise InvalidConfig(f"{path}.instance_regions", "at least one instance required")
        for j, r in enumerate(inst):
            if r not in known:
                raise InvalidConfig(f"{path}.instance_regions[{j}]", f"unknown region {r!r}")
        delay = _num(_req(s, "compute_delay_ms", path + "."), f"{path}.compute_delay_ms", 0)
        searchers.append(SearcherSpec(sid, tuple(inst), float(delay)))

    n_opp = _num(_req(raw, "n_opportunities", ""), "n_opportunities", 1, integer=True)

    origin = _req(raw, "opportunity_origin", "")
    if origin != UNIFORM:
        if not isinstance(origin, Mapping) or not origin:
            raise InvalidConfig("opportunity_origin", "expected 'uniform' or a {region: weight} mapping")
        for r, w in origin.items():
            if r not in known:
                raise InvalidConfig(f"opportunity_origin.{r}", "unknown region")
            _num(w, f"opportunity_origin.{r}", 0)
        if sum(origin.values()) <= 0:
            raise InvalidConfig("opportunity_origin", "weights sum to zero")
        origin = dict(sorted(origin.items()))

    validator = _req(raw, "validator_region", "")
    if isinstance(validator, list):
        if not validator:
            raise InvalidConfig("validator_region", "rotation list is empty")
        for j, r in enumerate(validator):
            if r not in known:
                raise InvalidConfig(f"validator_region[{j}]", f"unknown region {r!r}")
        validator = tuple(validator)
    elif validator != ROTATE and validator not in known:
        raise InvalidConfig("validator_region", f"unknown region {validator!r}")

    interval = _num(_req(raw, "opportunity_interval_ms", ""), "opportunity_interval_ms", 0)
    start = _num(_req(raw, "start_ms", ""), "start_ms", 0, integer=True)
    ppw = _num(_req(raw, "profit_per_win", ""), "profit_per_win", 0, integer=True)
    return SimConfig(seed, regions, lm, tuple(searchers), n_opp, origin, validator,
                     float(interval), start, ppw)


def load_sim_config(path: str | Path) -> SimConfig:
    return parse_config(load_config(path), Path(path).parent)


def default_config_dict(**overrides) -> dict:
    """A fully explicit config dict; callers override what they need."""
    cfg = {
        "seed": 0,
        "regions": "shipped",
        "latency_model": {"base_ms": 5.0, "ms_per_km": 0.02, "jitter_ms": 0.0},
        "searchers": [],
        "n_opportunities": 1,
        "opportunity_origin": UNIFORM,
        "validator_region": ROTATE,
        "opportunity_interval_ms": 1000.0,
        "start_ms": 0,
        "profit_per_win": 1,
    }
    cfg.update(overrides)
    return cfg


# ---------------------------------------------------------------------------
# Outcome types


@dataclass(frozen=True)
class Attempt:
    searcher_id: str
    instance: int
    region: str
    recv_ms: float
    arrive_ms: float
    won: bool


@dataclass(frozen=True)
class OpportunityOutcome:
    index: int
    origin: str
    validator: str
    t0_ms: float
    winner: str
    attempts: tuple[Attempt, ...]


@dataclass
class SearcherOutcome:
    searcher_id: str
    n_instances: int
    n_success: int = 0
    n_failed: int = 0
    profit: int = 0
    n_opportunities: int = 0

    @property
    def n_attempts(self) -> int:
        return self.n_success + self.n_failed

    @property
    def success_rate(self) -> Fraction:
        return Fraction(self.n_success, self.n_attempts) if self.n_attempts else Fraction(0)

    @property
    def repeated_tx_rate(self) -> Fraction:
        """Submissions per opportunity group, the analog of repeated messages per block."""
        return Fraction(self.n_attempts, self.n_opportunities) if self.n_opportunities else Fraction(1)


@dataclass
class SimOutcome:
    config: SimConfig
    opportunities: list[OpportunityOutcome] = field(default_factory=list)
    searchers: dict[str, SearcherOutcome] = field(default_factory=dict)

    def win_share(self, searcher_id: str) -> float:
        n = len(self.opportunities)
        return self.searchers[searcher_id].n_success / n if n else 0.0

    def summary(self) -> dict:
        return {
            "n_opportunities": len(self.opportunities),
            "searchers": {
                sid: {
                    "n_instances": s.n_instances,
                    "n_success": s.n_success,
                    "n_failed": s.n_failed,
                    "profit": s.profit,
                    "success_rate": float(s.success_rate),
                    "repeated_tx_rate": float(s.repeated_tx_rate),
                    "win_share": self.win_share(sid),
                }
                for sid, s in sorted(self.searchers.items())
            },
        }


# ---------------------------------------------------------------------------
# Simulation


class _Distances:
    def __init__(self, regions: Sequence[Region]):
        self.index = {r.name: i for i, r in enumerate(regions)}
        n = len(regions)
        self.km = [[haversine_km(regions[i], regions[j]) for j in range(n)] for i in range(n)]

    def __call__(self, a: str, b: str) -> float:
        return self.km[self.index[a]][self.index[b]]


_OPPORTUNITY, _RECEIVE, _ARRIVE = 0, 1, 2


def simulate(cfg: SimConfig) -> SimOutcome:
    dist = _Distances(cfg.regions)
    lm = cfg.latency_model
    names = [r.name for r in cfg.regions]
    if cfg.opportunity_origin == UNIFORM:
        origin_names, origin_p = names, None
    else:
        origin_names = list(cfg.opportunity_origin)
        w = np.array([cfg.opportunity_origin[r] for r in origin_names], dtype=float)
        origin_p = w / w.sum()
    if cfg.validator_region == ROTATE:
        rotation = names
    elif isinstance(cfg.validator_region, tuple):
        rotation = list(cfg.validator_region)
    else:
        rotation = None

    out = SimOutcome(cfg)
    for s in cfg.searchers:
        out.searchers[s.id] = SearcherOutcome(s.id, len(s.instance_regions))

    origin_rng = np.random.default_rng([cfg.seed, _ORIGIN_STREAM])
    # (time, tie key, sequence, kind, payload); the tie key orders simultaneous events
    queue: list = []
    seq = 0
    for k in range(cfg.n_opportunities):
        heapq.heappush(queue, (cfg.start_ms + k * cfg.opportunity_interval_ms, 0.0, seq, _OPPORTUNITY, k))
        seq += 1

    opp_state: dict[int, dict] = {}
    n_expected = sum(len(x.instance_regions) for x in cfg.searchers)
    while queue:
        t, _tie, _seq, kind, payload = heapq.heappop(queue)
        if kind == _OPPORTUNITY:
            k = payload
            origin = origin_names[int(origin_rng.choice(len(origin_names), p=origin_p))]
            validator = rotation[int(origin_rng.integers(len(rotation)))] if rotation else cfg.validator_region
            opp_state[k] = {"origin": origin, "validator": validator, "t0": t, "winner": None, "attempts": []}
            for s_idx, s in enumerate(cfg.searchers):
                rng = np.random.default_rng([cfg.seed, _ATTEMPT_STREAM, k, s_idx])
                # row i = (hop-1 jitter, hop-2 jitter, tie key) of instance i; appending an
                # instance appends a row and leaves earlier rows unchanged
                draws = rng.standard_normal((len(s.instance_regions), 3))
                for i, region in enumerate(s.instance_regions):
                    j1, j2 = abs(draws[i, 0]) * lm.jitter_ms, abs(draws[i, 1]) * lm.jitter_ms
                    recv = t + lm.delay(dist(origin, region), j1)
                    heapq.heappush(queue, (recv, 0.0, seq, _RECEIVE, (k, s_idx, i, j2, float(draws[i, 2]))))
                    seq += 1
                out.searchers[s.id].n_opportunities += 1
        elif kind == _RECEIVE:
            k, s_idx, i, j2, tie = payload
            s = cfg.searchers[s_idx]
            st = opp_state[k]
            region = s.instance_regions[i]
            arrive = t + s.compute_delay_ms + lm.delay(dist(region, st["validator"]), j2)
            heapq.heappush(queue, (arrive, tie, seq, _ARRIVE, (k, s_idx, i, t)))
            seq += 1
        else:
            k, s_idx, i, recv = payload
            s = cfg.searchers[s_idx]
            st = opp_state[k]
            won = st["winner"] is None
            if won:
                st["winner"] = s.id
                out.searchers[s.id].n_success += 1
                out.searchers[s.id].profit += cfg.profit_per_win
            else:
                out.searchers[s.id].n_failed += 1
            st["attempts"].append(Attempt(s.id, i, s.instance_regions[i], recv, t, won))
            if len(st["attempts"]) == n_expected:
                out.opportunities.append(OpportunityOutcome(
                    k, st["origin"], st["validator"], st["t0"], st["winner"], tuple(st["attempts"])))
                del opp_state[k]
    out.opportunities.sort(key=lambda o: o.index)
    return out


def tx_id(k: int) -> str:
    return f"opp-{k:07d}"


def export_arrivals(outcome: SimOutcome) -> list[ArrivalRecord]:
    """First time each instance region heard of each opportunity, as an arrival log."""
    out = []
    for opp in outcome.opportunities:
        first: dict[str, float] = {}
        for a in opp.attempts:
            if a.region not in first or a.recv_ms < first[a.region]:
                first[a.region] = a.recv_ms
        for region, t in first.items():
            out.append(ArrivalRecord(int(round(t)), tx_id(opp.index), region))
    out.sort(key=lambda a: (a.t_ms, a.tx_id, a.region))
    return out
