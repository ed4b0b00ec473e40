"""Experiment orchestration behind the CLI verbs: run, compare, explain, replay."""
from __future__ import annotations

import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.constants.glossary import REPLAY_STATUS
from src.models import RunConfig, RunSummary, TreeParams

from .data import (
    apply_overrides,
    archive_records,
    dump_config,
    ic_from_record,
    load_config,
    read_archive_records,
    read_summary,
    write_json,
    write_jsonl,
    write_summary,
)
from .errors import InvalidInputError, SearchAborted, UndefinedTestError
from .external import ExternalSut
from .metrics import effectiveness_score, misprediction_severity
from .present import kp_label, rules_frame, tree_to_dict, tree_to_text
from .search import run
from .stats import ALPHA, mann_whitney_u, vargha_delaney, wilcoxon_signed_rank
from .sut import Sut, SyntheticSut
from .tree import build_tree, cv_mae, extract_rules, leaf_count, observations_for, trace_frame, tree_size

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
REPLAY_TOLERANCE = 1e-9

COMPARE_COLUMNS = [
    "group_a", "group_b", "runs_a", "runs_b", "es_median_a", "es_median_b",
    "es_p", "es_a12", "es_significant", "ms_p", "ms_a12", "ms_significant",
]
CV_COLUMNS = ["key_point", "observations", "mae", "size", "leaves"]
REPLAY_COLUMNS = ["objective", "status", "max_abs_diff"]


def warn(message: str) -> None:
    print(f"[warn] {message}", file=sys.stderr)


def derive_seed(master: int, rep: int) -> int:
    """splitmix64 output for state ``master + (rep + 1) * golden gamma``."""
    z = (master + (rep + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def make_sut(cfg: RunConfig) -> Sut:
    if cfg.external_command:
        return ExternalSut(cfg.external_command, cfg.sut.k, cfg.external_timeout)
    return SyntheticSut.from_config(cfg)


# ----------------------------
# run
# ----------------------------
def execute_run(cfg: RunConfig, run_dir: str | Path) -> RunSummary:
    """One search run; writes config.yaml, archive.jsonl, trace.jsonl and summary.json."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, run_dir / "config.yaml")

    status, error = "ok", None
    sut = make_sut(cfg)
    try:
        archive, trace = run(cfg.search, sut)
    except SearchAborted as e:
        archive, trace = e.archive, e.trace
        status, error = "aborted", str(e)
    finally:
        sut.close()

    k = cfg.sut.k
    write_jsonl(run_dir / "archive.jsonl", archive_records(archive))
    write_jsonl(run_dir / "trace.jsonl", trace.records)
    summary = RunSummary(
        algorithm=cfg.search.algorithm,
        seed=cfg.search.seed,
        k=k,
        epsilon=cfg.search.epsilon,
        evaluations=trace.evaluations_used,
        generations=len(trace.generations),
        es=effectiveness_score(archive, k),
        ms=[float(v) for v in misprediction_severity(archive, k)],
        covered=sorted(archive.covered),
        status=status,
        error=error,
    )
    write_summary(run_dir / "summary.json", summary)
    return summary


def _execute(job: Tuple[RunConfig, str]) -> RunSummary:
    return execute_run(*job)


def rep_dir(out: str | Path, cfg: RunConfig, rep: int) -> Path:
    return Path(out) / cfg.search.algorithm.value / f"rep-{rep:02d}"


def cmd_run(cfg: RunConfig, out: str | Path, reps: int = 1, jobs: int = 1) -> List[RunSummary]:
    """``reps`` seeded repetitions. A single repetition uses the configured seed as is."""
    if reps < 1:
        raise InvalidInputError(f"reps must be >= 1, got {reps}")
    master = cfg.search.seed
    jobs_list = []
    for rep in range(reps):
        seed = master if reps == 1 else derive_seed(master, rep)
        rep_cfg = apply_overrides(cfg, seed=seed)
        jobs_list.append((rep_cfg, str(rep_dir(out, cfg, rep))))

    if jobs > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_execute, jobs_list))
    else:
        summaries = [_execute(j) for j in jobs_list]

    for (rep_cfg, path), s in zip(jobs_list, summaries):
        logger.info("%s seed=%d -> %s: ES=%.3f (%s)", s.algorithm.value, s.seed, path, s.es, s.status)
    return summaries


# ----------------------------
# compare
# ----------------------------
def load_group(path: str | Path) -> List[RunSummary]:
    """Summaries of every run under ``path`` (or of ``path`` itself)."""
    root = Path(path)
    if (root / "summary.json").exists():
        files = [root / "summary.json"]
    else:
        files = sorted(root.glob("**/summary.json"))
    return [read_summary(f) for f in files]


def unique_pairs(names: Sequence[str]) -> List[Tuple[str, str]]:
    seen = []
    for n in names:
        if n not in seen:
            seen.append(n)
    return list(combinations(seen, 2))


def compare_groups(name_a: str, runs_a: Sequence[RunSummary],
                   name_b: str, runs_b: Sequence[RunSummary]) -> Dict[str, object]:
    for name, runs in ((name_a, runs_a), (name_b, runs_b)):
        if len(runs) < 2:
            raise InvalidInputError(f"group {name!r} needs at least 2 runs, found {len(runs)}")
    ks = {r.k for r in list(runs_a) + list(runs_b)}
    if len(ks) != 1:
        raise InvalidInputError(f"runs disagree on the number of key-points: {sorted(ks)}")

    es_a = [r.es for r in runs_a]
    es_b = [r.es for r in runs_b]
    _, es_p = mann_whitney_u(es_a, es_b)

    # per key-point mean MS, paired by key-point
    ms_a = np.mean([r.ms for r in runs_a], axis=0)
    ms_b = np.mean([r.ms for r in runs_b], axis=0)
    try:
        _, ms_p = wilcoxon_signed_rank(ms_a - ms_b)
    except UndefinedTestError:
        ms_p = 1.0

    return {
        "group_a": name_a,
        "group_b": name_b,
        "runs_a": len(runs_a),
        "runs_b": len(runs_b),
        "es_median_a": float(np.median(es_a)),
        "es_median_b": float(np.median(es_b)),
        "es_p": es_p,
        "es_a12": vargha_delaney(es_a, es_b),
        "es_significant": bool(es_p < ALPHA),
        "ms_p": ms_p,
        "ms_a12": vargha_delaney(ms_a, ms_b),
        "ms_significant": bool(ms_p < ALPHA),
    }


def cmd_compare(groups: Dict[str, Sequence[RunSummary]], out: Optional[str | Path] = None) -> pd.DataFrame:
    rows = [compare_groups(a, groups[a], b, groups[b]) for a, b in unique_pairs(list(groups))]
    report = pd.DataFrame(rows, columns=COMPARE_COLUMNS)
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        report.to_csv(out, index=False)
    return report


# ----------------------------
# explain
# ----------------------------
def cmd_explain(trace_paths: Sequence[str | Path], key_points: Optional[Sequence[int]],
                params: TreeParams, out_dir: str | Path) -> pd.DataFrame:
    """Per key-point tree, rules and CV MAE from observations pooled across traces."""
    out = Path(out_dir)
    (out / "trees").mkdir(parents=True, exist_ok=True)
    (out / "rules").mkdir(parents=True, exist_ok=True)

    frame = trace_frame([str(p) for p in trace_paths])
    k = sum(1 for c in frame.columns if c.startswith("ne_"))
    if k == 0:
        raise InvalidInputError(f"no evaluations found in {len(trace_paths)} trace file(s)")
    selected = list(range(k)) if not key_points else list(key_points)
    categories = frozenset(int(m) for m in frame["model_id"].unique())

    rows = []
    for kp in selected:
        label = kp_label(kp)
        if not 0 <= kp < k:
            warn(f"{label} skipped: traces only have {k} key-points")
            continue
        obs = observations_for(frame, kp)
        try:
            tree = build_tree(obs, params.min_leaf, params.prune_fraction, params.seed, categories)
            mae = cv_mae(obs, params.folds, params.min_leaf, params.prune_fraction, params.seed)
        except InvalidInputError as e:
            warn(f"{label} skipped: {e}")
            continue
        stem = f"kp{kp + 1:02d}"
        (out / "trees" / f"{stem}.txt").write_text(tree_to_text(tree), encoding="utf-8")
        write_json(out / "trees" / f"{stem}.json", tree_to_dict(tree))
        rules_frame(extract_rules(tree), tree.categories).to_csv(out / "rules" / f"{stem}.csv", index=False)
        rows.append({
            "key_point": label,
            "observations": len(obs),
            "mae": mae,
            "size": tree_size(tree),
            "leaves": leaf_count(tree),
        })
        logger.info("%s: %d observations, CV MAE %.4f, %d nodes", label, len(obs), mae, tree_size(tree))

    report = pd.DataFrame(rows, columns=CV_COLUMNS)
    report.to_csv(out / "cv_mae.csv", index=False)
    return report


# ----------------------------
# replay
# ----------------------------
def cmd_replay(archive_path: str | Path, cfg: Optional[RunConfig] = None,
               out: Optional[str | Path] = None) -> Tuple[pd.DataFrame, bool]:
    """Re-evaluates every archived input and compares the stored fitness vectors."""
    archive_path = Path(archive_path)
    if cfg is None:
        cfg = load_config(archive_path.parent / "config.yaml")
    records = read_archive_records(archive_path)

    rows = []
    sut = make_sut(cfg)
    try:
        for rec in records:
            test = sut.evaluate(ic_from_record(rec.ic))
            stored = np.asarray(rec.fitness, dtype=float)
            if stored.shape != test.fitness.shape:
                diff = float("inf")
            else:
                diff = float(np.max(np.abs(stored - test.fitness)))
            ok = diff <= REPLAY_TOLERANCE
            rows.append({"objective": rec.objective, "status": REPLAY_STATUS[ok], "max_abs_diff": diff})
            if not ok:
                logger.warning("objective %d: fitness differs by %.3g", rec.objective, diff)
    finally:
        sut.close()

    report = pd.DataFrame(rows, columns=REPLAY_COLUMNS)
    if out is not None:
        report.to_csv(out, index=False)
    all_ok = bool((report["status"] == REPLAY_STATUS[True]).all()) if len(report) else True
    return report, all_ok


def with_external(cfg: RunConfig, command: Optional[str]) -> RunConfig:
    """``None`` keeps the configured SUT; an empty command switches back to the synthetic one."""
    return cfg if command is None else apply_overrides(cfg, external_command=command)
