"""Campaign execution: sweep points x seeds, CSV records, JSON summaries, manifest.

Output layout under the campaign directory::

    manifest.json                      configs, seeds, status, every file written
    summary.json                       one entry per sweep point
    points/point_000/summary.json      per-point aggregate over seeds
    points/point_000/seed_1.csv        per-run records, one row per (step, UE)

Nothing time-dependent is written, so reruns of a config reproduce every
file byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Campaign, SimConfig
from .engine import PERCENTILES, MetricsRecord, run
from .scenario import OUTAGE

log = logging.getLogger(__name__)

RECORD_COLUMNS = ["time", "ue_id", "serving", "sinr_db", "offered_rate", "achieved_rate", "handover"]
OUTPUT_ENV = "MMSIM_OUTPUT_DIR"
DEFAULT_OUTPUT = "mmsim_out"

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3


def output_dir(campaign: Campaign, override=None) -> Path:
    """``--out`` beats the config's ``output_dir``, which beats the environment."""
    return Path(override or campaign.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def records_csv(records: list[MetricsRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow([repr(r.time), r.ue_id, r.serving, repr(r.sinr_db), repr(r.offered_rate),
                    repr(r.achieved_rate), int(r.handover)])
    return buf.getvalue()


def read_records(path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        MetricsRecord(float(r["time"]), int(r["ue_id"]), int(r["serving"]), float(r["sinr_db"]),
                      float(r["offered_rate"]), float(r["achieved_rate"]), r["handover"] == "1")
        for r in rows
    ]


def rate_checks(records: list[MetricsRecord], cfg: SimConfig) -> dict:
    """Largest per-gNB aggregate and per-UE rates over all steps."""
    cell: dict[tuple[float, int], float] = {}
    max_ue = 0.0
    for r in records:
        max_ue = max(max_ue, r.achieved_rate)
        if r.serving != OUTAGE:
            cell[r.time, r.serving] = cell.get((r.time, r.serving), 0.0) + r.achieved_rate
    max_cell = max(cell.values(), default=0.0)
    return {
        "max_ue_rate_bps": max_ue,
        "max_cell_rate_bps": max_cell,
        "ue_cap_ok": max_ue <= cfg.source_rate * (1 + 1e-12),
        "cell_cap_ok": max_cell <= cfg.max_phy_rate * (1 + 1e-12),
    }


@dataclass
class RunResult:
    point: int
    seed: int
    path: str
    sha256: str
    summary: dict
    checks: dict
    sinr_served: np.ndarray


def _execute(job) -> RunResult:
    point, cfg, path = job
    records, summary = run(cfg)
    text = records_csv(records)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)
    sinr = np.array([r.sinr_db for r in records if r.serving != OUTAGE])
    return RunResult(point, cfg.seed, path, hashlib.sha256(text.encode()).hexdigest(),
                     summary, rate_checks(records, cfg), sinr)


_AGG_KEYS = ["throughput_mean_bps", "throughput_mean_excl_outage_bps", "throughput_p10_bps",
             "throughput_p50_bps", "sinr_mean_db", "sinr_mean_all_db", "outage_fraction",
             "beamforming_gain_mean_db", "beamforming_gain_mean_los_db", "beamforming_gain_mean_nlos_db"]


def aggregate_point(results: list[RunResult]) -> dict:
    """Seed-averaged statistics plus a SINR CDF over all served samples."""
    runs = sorted(results, key=lambda r: r.seed)
    summaries = [r.summary for r in runs if r.summary]
    agg = {}
    for key in _AGG_KEYS:
        vals = [s[key] for s in summaries if s.get(key) is not None]
        agg[key] = float(np.mean(vals)) if vals else None
    agg["handover_count"] = int(sum(s["handover_count"] for s in summaries))
    pooled = np.concatenate([r.sinr_served for r in runs]) if runs else np.empty(0)
    agg["sinr_cdf_db"] = (
        {str(p): float(v) for p, v in zip(PERCENTILES, np.percentile(pooled, PERCENTILES))}
        if pooled.size else {}
    )
    return {
        "aggregate": agg,
        "per_seed": {str(r.seed): {**r.summary, "checks": r.checks} for r in runs},
    }


def _label(i: int) -> str:
    return f"point_{i:03d}"


def plan(campaign: Campaign, out: Path) -> list[tuple[int, SimConfig, str]]:
    jobs = []
    for i, cfg in enumerate(campaign.configs()):
        for k in range(campaign.seeds):
            seed = cfg.seed + k
            path = out / "points" / _label(i) / f"seed_{seed}.csv"
            jobs.append((i, cfg.model_copy(update={"seed": seed}), str(path)))
    return jobs


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _remove_previous(out: Path) -> None:
    """Delete files listed by an earlier manifest so stale outputs never linger."""
    old = out / "manifest.json"
    if not old.exists():
        return
    try:
        listed = json.loads(old.read_text()).get("files", [])
    except (ValueError, AttributeError):
        return
    for rel in listed:
        target = (out / rel).resolve()
        if out.resolve() in target.parents and target.is_file():
            target.unlink()


def run_campaign(campaign: Campaign, out=None, workers: int = 1) -> int:
    """Run every (sweep point, seed) and write outputs; returns an exit code.

    Points whose runs did not all finish are marked ``incomplete`` (interrupt)
    or ``failed`` (exception) in the manifest, and only files that exist are
    listed.
    """
    out = output_dir(campaign, out)
    out.mkdir(parents=True, exist_ok=True)
    _remove_previous(out)
    jobs = plan(campaign, out)
    points = campaign.points()
    results: dict[int, list[RunResult]] = {i: [] for i in range(len(points))}
    failed: dict[int, str] = {}
    interrupted = False
    try:
        if workers <= 1 or len(jobs) <= 1:
            for job in jobs:
                try:
                    res = _execute(job)
                except Exception as exc:  # record and keep going with other runs
                    log.error("run %s seed %d failed: %s", _label(job[0]), job[1].seed, exc)
                    failed.setdefault(job[0], str(exc))
                    continue
                results[res.point].append(res)
                log.info("finished %s seed %d", _label(res.point), res.seed)
        else:
            pool = ProcessPoolExecutor(max_workers=workers)
            try:
                futures = [(job, pool.submit(_execute, job)) for job in jobs]
                for job, fut in futures:
                    try:
                        res = fut.result()
                    except Exception as exc:
                        log.error("run %s seed %d failed: %s", _label(job[0]), job[1].seed, exc)
                        failed.setdefault(job[0], str(exc))
                        continue
                    results[res.point].append(res)
            finally:
                pool.shutdown(wait=True, cancel_futures=True)
    except KeyboardInterrupt:
        interrupted = True
        log.warning("interrupted; writing partial manifest")

    files: list[str] = []
    entries = []
    configs = campaign.configs()
    for i, point in enumerate(points):
        done = sorted(results[i], key=lambda r: r.seed)
        if i in failed:
            status = "failed"
        elif len(done) < campaign.seeds:
            status = "incomplete"
        else:
            status = "complete"
        entry = {
            "point": _label(i),
            "overrides": point,
            "config": configs[i].model_dump(mode="json"),
            "seeds": [r.seed for r in done],
            "status": status,
            "records": {str(r.seed): str(Path(r.path).relative_to(out)) for r in done},
            "sha256": {str(r.seed): r.sha256 for r in done},
        }
        if i in failed:
            entry["error"] = failed[i]
        files.extend(entry["records"].values())
        if done:
            rel = Path("points") / _label(i) / "summary.json"
            agg = aggregate_point(done)
            _dump(out / rel, {"point": _label(i), "overrides": point, "status": status, **agg})
            entry["summary"] = str(rel)
            entry["aggregate"] = agg["aggregate"]
            files.append(str(rel))
        entries.append(entry)

    _dump(out / "summary.json", {
        "points": [
            {"point": e["point"], "overrides": e["overrides"], "status": e["status"],
             **e.get("aggregate", {})}
            for e in entries
        ],
    })
    files.append("summary.json")
    complete = all(e["status"] == "complete" for e in entries)
    status = "success" if complete else ("failed" if failed and not interrupted else "partial")
    manifest = {
        "status": status,
        "n_points": len(points),
        "n_runs_planned": len(jobs),
        "n_runs_completed": sum(len(v) for v in results.values()),
        "seeds": campaign.seeds,
        "campaign": campaign.to_dict(),
        "points": [{k: v for k, v in e.items() if k != "aggregate"} for e in entries],
        "files": sorted(files + ["manifest.json"]),
    }
    _dump(out / "manifest.json", manifest)
    if interrupted:
        return EXIT_PARTIAL
    if failed:
        return EXIT_RUNTIME
    return EXIT_OK
