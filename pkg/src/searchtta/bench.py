"""Episode loop, search metrics, and the paired TTA / no-TTA suite runner."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from searchtta.adapt import IntensityModel, MeasurementLog, TtaConfig, lambda_map, tta_update
from searchtta.errors import CoverageComplete, FormatError, ParameterError, SearchError
from searchtta.grid import FeatureField, ScoreMap, check_cell
from searchtta.plan import InformationSurfing, Lawnmower, Observation, make_planner, planner_to_dict
from searchtta.priors import ScenarioParams, load_score_map, map_quality, save_score_map, synth_scenario
from searchtta.regions import partition
from searchtta.world import GridWorld, apply_action, initial_state, load_world, sense

log = logging.getLogger(__name__)

DEFAULT_CHECKPOINTS = (0.0, 0.5, 1.0)
ARMS = ("tta", "no_tta")


@dataclass(frozen=True, eq=False)
class EpisodeConfig:
    world: GridWorld
    base: ScoreMap
    features: FeatureField | None = None
    planner: object = field(default_factory=InformationSurfing)
    tta: TtaConfig | None = field(default_factory=TtaConfig)
    budget: int = 256
    start: int | None = None
    seed: int = 0
    checkpoints: tuple = DEFAULT_CHECKPOINTS
    name: str = "episode"

    def __post_init__(self):
        if self.budget < 0:
            raise ParameterError(f"budget must be >= 0, got {self.budget}")
        if self.base.n != self.world.n:
            raise ParameterError("base map and world differ in size")
        if self.start is not None:
            check_cell(self.start, self.world.n)
        if self.tta is not None and self.features is None:
            raise ParameterError("TTA needs a feature field for region partitioning")
        if any(not 0.0 <= f <= 1.0 for f in self.checkpoints):
            raise ParameterError("checkpoint fractions must lie in [0, 1]")

    def start_cell(self) -> int:
        if isinstance(self.planner, Lawnmower):
            return self.planner.fixed_start
        if self.start is not None:
            return int(self.start)
        rng = np.random.default_rng([self.seed, 2])
        return int(rng.integers(self.world.n * self.world.n))

    def pairing_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.world.digest().encode())
        h.update(np.ascontiguousarray(self.base.values).tobytes())
        h.update(str(self.start_cell()).encode())
        return h.hexdigest()


@dataclass(eq=False)
class EpisodeResult:
    name: str
    targets_found: int
    targets_total: int
    steps_to_first: int | None
    rmse_at: dict
    trajectory: tuple
    tta_event_steps: tuple
    final_map: ScoreMap
    budget: int
    connectivity: int
    quality: float
    world_hash: str
    start_on_target: bool = False
    region_count: int | None = None

    @property
    def found_fraction(self) -> float:
        return self.targets_found / self.targets_total if self.targets_total else 0.0

    @property
    def steps_used(self) -> int:
        return len(self.trajectory) - 1

    def to_row(self) -> dict:
        return {
            "id": self.name,
            "found_fraction": self.found_fraction,
            "targets_found": self.targets_found,
            "targets_total": self.targets_total,
            "steps_to_first": self.steps_to_first,
            "start_on_target": self.start_on_target,
            "rmse_at": {f"{k:g}": v for k, v in sorted(self.rmse_at.items())},
            "quality": self.quality,
            "budget": self.budget,
            "steps_used": self.steps_used,
            "connectivity": self.connectivity,
            "regions": self.region_count,
            "tta_event_steps": list(self.tta_event_steps),
            "world_hash": self.world_hash,
            "trajectory": list(self.trajectory),
        }


def rmse(pred: ScoreMap, gt: ScoreMap) -> float:
    """RMSE after min-max normalizing each map on its own (constant maps become 0)."""
    if pred.n != gt.n:
        raise ParameterError(f"map sizes differ: {pred.n} vs {gt.n}")

    def scale(v):
        lo, hi = v.min(), v.max()
        return np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)

    diff = scale(pred.values) - scale(gt.values)
    return float(np.sqrt(np.mean(diff * diff)))


def run_episode(cfg: EpisodeConfig) -> EpisodeResult:
    world = cfg.world
    planner = cfg.planner
    budget = cfg.budget
    start = cfg.start_cell()
    state = initial_state(world.n, start, budget)

    model = None
    part = None
    if cfg.tta is not None:
        part = partition(cfg.features, seed=cfg.seed)
        model = IntensityModel.from_base(cfg.base, part)
        mlog = MeasurementLog(part)
    belief = cfg.base

    marks = {f: int(math.floor(f * budget + 0.5)) for f in cfg.checkpoints}
    rmse_at = {}
    events = []
    found = {}
    first = None

    def checkpoint(t):
        for f, s in marks.items():
            if s == t and f not in rmse_at:
                rmse_at[f] = rmse(belief, world.gt_score_map)

    def record(m):
        nonlocal first
        fresh = m.cell not in found
        if fresh:
            found[m.cell] = m.positive_count
        if m.positive and first is None:
            first = m.step
        return fresh

    m = sense(world, start, 0)
    record(m)
    checkpoint(0)
    last_event = 0
    if model is not None:
        mlog = mlog.add(m)
        if m.positive:
            model = tta_update(model, mlog, cfg.tta)
            belief = lambda_map(model)
            events.append(0)

    total = world.total_targets
    while state.steps_used < budget and sum(found.values()) < total:
        obs = Observation(state.position, state.visited, belief, budget - state.steps_used)
        try:
            nxt = planner.step(obs)
        except CoverageComplete:
            break
        state = apply_action(state, nxt, planner.connectivity)
        t = state.steps_used
        m = sense(world, nxt, t)
        fresh = record(m)
        if model is not None:
            mlog = mlog.add(m)
            if (m.positive and fresh) or t - last_event >= cfg.tta.cadence:
                model = tta_update(model, mlog, cfg.tta)
                belief = lambda_map(model)
                events.append(t)
                last_event = t
        checkpoint(t)

    for f in cfg.checkpoints:
        rmse_at.setdefault(f, rmse(belief, world.gt_score_map))

    return EpisodeResult(
        name=cfg.name,
        targets_found=sum(found.values()),
        targets_total=total,
        steps_to_first=first,
        rmse_at=rmse_at,
        trajectory=state.trajectory,
        tta_event_steps=tuple(events),
        final_map=belief,
        budget=budget,
        connectivity=planner.connectivity,
        quality=map_quality(cfg.base, world),
        world_hash=cfg.pairing_hash(),
        start_on_target=world.count_at(start) > 0,
        region_count=None if part is None else part.k,
    )


def _bucket_size(fraction: float, n: int) -> int:
    return max(1, math.ceil(round(fraction * n, 9)))


def percentile_buckets(results, fractions=(0.05, 0.02)) -> dict:
    """Mean found fraction overall and over the lowest-quality ceil(f*N) episodes.

    ``results`` is a list of ``(quality, EpisodeResult)``; ties in quality keep
    input order.
    """
    results = list(results)
    if not results:
        raise ParameterError("no episodes to bucket")
    ranked = sorted(range(len(results)), key=lambda i: results[i][0])
    found = [results[i][1].found_fraction for i in ranked]
    out = {"all": {"n": len(found), "found": float(np.mean(found))}}
    for f in fractions:
        size = _bucket_size(f, len(found))
        out[f"bottom_{f:g}"] = {
            "n": size,
            "found": float(np.mean(found[:size])),
            "members": [results[i][1].name for i in ranked[:size]],
        }
    return out


# --- configuration documents -------------------------------------------------


def _resolve(base_dir: Path | None, value) -> Path:
    path = Path(value)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    return path


def load_features(path) -> FeatureField:
    path = Path(path)
    try:
        vectors = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    n = math.isqrt(vectors.shape[0])
    if n * n != vectors.shape[0]:
        raise FormatError(f"{path}: {vectors.shape[0]} rows is not a square cell count")
    return FeatureField(n, vectors)


def episode_from_dict(doc: dict, base_dir: Path | None = None, seed: int | None = None) -> EpisodeConfig:
    """Build an EpisodeConfig from its JSON form.

    Either ``scenario`` (synthetic parameters) or ``world`` + ``base_map``
    (+ ``features`` when TTA is on) must be present. ``seed`` overrides both
    the scenario seed and the episode seed.
    """
    doc = dict(doc)
    ep_seed = int(doc.get("seed", 0) if seed is None else seed)
    if "scenario" in doc:
        params = dict(doc["scenario"])
        if seed is not None:
            params["seed"] = seed
        world, base, features = synth_scenario(ScenarioParams.from_dict(params))
    elif "world" in doc:
        world = load_world(_resolve(base_dir, doc["world"]))
        if "base_map" not in doc:
            raise ParameterError("file-based episodes need a base_map")
        base = load_score_map(_resolve(base_dir, doc["base_map"]))
        features = load_features(_resolve(base_dir, doc["features"])) if "features" in doc else None
    else:
        raise ParameterError("episode config needs 'scenario' or 'world'")

    tta_doc = doc.get("tta", {})
    tta = None if tta_doc is None else TtaConfig.from_dict(tta_doc)
    unknown = set(doc) - {
        "name", "scenario", "world", "base_map", "features", "planner", "tta",
        "budget", "start", "seed", "checkpoints",
    }
    if unknown:
        raise ParameterError(f"unknown episode fields: {sorted(unknown)}")
    return EpisodeConfig(
        world=world,
        base=base,
        features=features,
        planner=make_planner(doc.get("planner", {"kind": "information_surfing"})),
        tta=tta,
        budget=int(doc.get("budget", 256)),
        start=doc.get("start"),
        seed=ep_seed,
        checkpoints=tuple(float(f) for f in doc.get("checkpoints", DEFAULT_CHECKPOINTS)),
        name=str(doc.get("name", "episode")),
    )


@dataclass(frozen=True)
class SuiteConfig:
    templates: tuple
    seeds: tuple
    arms: tuple = ARMS

    @classmethod
    def from_dict(cls, doc: dict) -> "SuiteConfig":
        seeds = doc.get("seeds", [0, 1])
        if isinstance(seeds, dict):
            seeds = range(int(seeds.get("start", 0)), int(seeds["stop"]))
        elif len(seeds) == 2 and doc.get("seed_range", True):
            seeds = range(int(seeds[0]), int(seeds[1]))
        arms = tuple(doc.get("arms", ARMS))
        if not set(arms) <= set(ARMS) or not arms:
            raise ParameterError(f"arms must be drawn from {ARMS}")
        templates = tuple(doc.get("templates", ()))
        if not templates:
            raise ParameterError("suite needs at least one template")
        names = [t.get("name", f"t{i}") for i, t in enumerate(templates)]
        if len(set(names)) != len(names):
            raise ParameterError("template names must be unique")
        return cls(templates, tuple(int(s) for s in seeds), arms)


def suite_jobs(suite: SuiteConfig) -> list:
    jobs = []
    for i, template in enumerate(suite.templates):
        tname = template.get("name", f"t{i}")
        for s in suite.seeds:
            for arm in suite.arms:
                doc = dict(template, name=f"{tname}/seed{s:05d}/{arm}")
                if arm == "no_tta":
                    doc["tta"] = None
                elif doc.get("tta") is None:
                    doc["tta"] = {}
                jobs.append((tname, s, arm, doc))
    return jobs


def _run_job(job, base_dir):
    tname, s, arm, doc = job
    try:
        cfg = episode_from_dict(doc, base_dir, seed=s)
        return tname, s, arm, run_episode(cfg)
    except SearchError as exc:
        raise SearchError(f"episode {doc['name']} failed: {exc}") from exc


def sign_test(tta, no_tta) -> dict:
    """One-sided paired sign test that the TTA arm finds more."""
    diff = np.asarray(tta) - np.asarray(no_tta)
    wins, losses = int(np.sum(diff > 0)), int(np.sum(diff < 0))
    p = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue if wins + losses else 1.0
    return {"wins": wins, "losses": losses, "ties": int(diff.size - wins - losses), "p_value": float(p)}


def aggregate(outcomes) -> dict:
    """Per-template, per-arm table rows plus a paired comparison per template."""
    groups = {}
    for tname, s, arm, res in outcomes:
        groups.setdefault(tname, {}).setdefault(arm, {})[s] = res
    table = {}
    for tname, arms in sorted(groups.items()):
        table[tname] = {}
        for arm, by_seed in sorted(arms.items()):
            results = [by_seed[s] for s in sorted(by_seed)]
            buckets = percentile_buckets([(r.quality, r) for r in results])
            firsts = [r.steps_to_first for r in results if r.steps_to_first is not None]
            rm = {f: float(np.mean([r.rmse_at[f] for r in results])) for f in results[0].rmse_at}
            fr = sorted(rm)
            table[tname][arm] = {
                "episodes": len(results),
                "found_pct_all": 100 * buckets["all"]["found"],
                "found_pct_bot5": 100 * buckets["bottom_0.05"]["found"],
                "found_pct_bot2": 100 * buckets["bottom_0.02"]["found"],
                "rmse_pct_first": 100 * rm[fr[0]],
                "rmse_pct_mid": 100 * rm[fr[len(fr) // 2]],
                "rmse_pct_last": 100 * rm[fr[-1]],
                "steps_to_first": float(np.mean(firsts)) if firsts else None,
                "episodes_with_find": len(firsts),
            }
        if "tta" in arms and "no_tta" in arms:
            seeds = sorted(set(arms["tta"]) & set(arms["no_tta"]))
            table[tname]["paired"] = sign_test(
                [arms["tta"][s].found_fraction for s in seeds],
                [arms["no_tta"][s].found_fraction for s in seeds],
            )
    return table


COLUMNS = (
    ("found_pct_all", "Found% All"),
    ("found_pct_bot5", "Bot-5%"),
    ("found_pct_bot2", "Bot-2%"),
    ("rmse_pct_first", "RMSE First"),
    ("rmse_pct_mid", "Mid"),
    ("rmse_pct_last", "Last"),
    ("steps_to_first", "Steps1st"),
)


def format_table(table: dict) -> str:
    header = ["template", "arm"] + [label for _, label in COLUMNS]
    rows = []
    for tname, arms in table.items():
        for arm in ARMS:
            if arm not in arms:
                continue
            row = [tname, arm]
            for key, _ in COLUMNS:
                v = arms[arm][key]
                row.append("-" if v is None else f"{v:.1f}")
            rows.append(row)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))) for r in [header] + rows]
    for tname, arms in table.items():
        if "paired" in arms:
            p = arms["paired"]
            lines.append(
                f"{tname}: TTA better on {p['wins']}, worse on {p['losses']}, tied {p['ties']} "
                f"(sign test p={p['p_value']:.3g})"
            )
    return "\n".join(lines)


def run_suite(suite: SuiteConfig, out_dir=None, jobs: int = 1, base_dir: Path | None = None) -> dict:
    """Run every (template, seed, arm) episode and write the report files.

    Writes ``episodes.jsonl`` (sorted by episode id, no timestamps),
    ``report.json``, ``report.txt`` and one final-map CSV per episode under
    ``maps/`` when ``out_dir`` is given.
    """
    work = suite_jobs(suite)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_job, work, [base_dir] * len(work)))
    else:
        outcomes = [_run_job(job, base_dir) for job in work]
    outcomes.sort(key=lambda o: o[3].name)

    table = aggregate(outcomes)
    report = {
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "episodes": len(outcomes),
        "seeds": list(suite.seeds),
        "arms": list(suite.arms),
        "table": table,
    }
    if out_dir is not None:
        out = Path(out_dir)
        (out / "maps").mkdir(parents=True, exist_ok=True)
        with open(out / "episodes.jsonl", "w", encoding="utf-8") as fh:
            for _, _, _, res in outcomes:
                fh.write(json.dumps(res.to_row(), sort_keys=True) + "\n")
        for _, _, _, res in outcomes:
            save_score_map(res.final_map, out / "maps" / (res.name.replace("/", "__") + ".csv"))
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        (out / "report.txt").write_text(format_table(table) + "\n", encoding="utf-8")
    report["outcomes"] = outcomes
    return report


def episode_to_dict(cfg: EpisodeConfig) -> dict:
    """Inline JSON form of a config (for audit dumps)."""
    return {
        "name": cfg.name,
        "planner": planner_to_dict(cfg.planner),
        "tta": None if cfg.tta is None else cfg.tta.to_dict(),
        "budget": cfg.budget,
        "start": cfg.start,
        "seed": cfg.seed,
        "checkpoints": list(cfg.checkpoints),
    }
