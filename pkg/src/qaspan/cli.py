"""Command-line workflow: ingest, annotate, score, tune, evaluate, analyze, humanqg, report.

Each stage reads from and writes to ``<outdir>/<stage>/<dataset>/``. Every
stage directory gets a ``manifest.json`` naming the seed, the config digest
and sha256 digests of its inputs and outputs; JSON artifacts also embed the
same provenance block.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import traceback
from pathlib import Path

from . import analysis, eval as ev
from .annotate import extract_all, load_precomputed_annotations, save_annotations
from .backends import BackendConfig, RecordingBackend, make_backend
from .baselines import load_external_token_scores, run_em, run_external
from .corpus import (Dataset, convert_cliff, convert_gd21, dataset_stats, load_dataset, save_dataset,
                     split_dataset)
from .pipeline import MetricConfig, dump_verdicts, load_verdicts, run_pipeline

logger = logging.getLogger("qaspan")

STAGES = ("ingest", "annotate", "score", "tune", "evaluate", "analyze", "humanqg", "report")
QA_METRICS = ("qe", "qafe")
BASELINES = ("em", "external")


class CLIError(Exception):
    """A user-facing failure; ``hint`` says what to do about it."""

    def __init__(self, message: str, hint: str = ""):
        super().__init__(message)
        self.hint = hint


# ---------------------------------------------------------------------------
# configuration and provenance

DEFAULTS = {
    "outdir": "runs", "seed": 0, "dataset": None, "input": None, "format": "native_jsonl",
    "annotations": None, "annotator": "replay", "metric": "qafe", "backend": "stub", "qa_backend": None,
    "cache": None, "qa_cache": None, "record": None, "endpoint": None, "qa_endpoint": None,
    "questions_per_span": None, "context_window": None, "max_concurrency": 4, "timeout": 30.0,
    "retries": 3, "external_scores": None, "external_name": "external", "token_threshold": 0.5,
    "systems": None, "resamples": 1000, "questions": None, "synthetic_questions": False,
}
# keys that do not change results, so they stay out of the digest
_NOT_DIGESTED = {"outdir", "record", "max_concurrency", "timeout", "retries"}


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise CLIError(f"unknown config key(s): {', '.join(unknown)}")
        cfg.update(loaded)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None and val is not False:
            cfg[key] = val
    cfg["command"] = args.command
    return cfg


def config_digest(cfg: dict) -> str:
    blob = {k: v for k, v in cfg.items() if k not in _NOT_DIGESTED}
    return hashlib.sha256(json.dumps(blob, sort_keys=True, default=str).encode()).hexdigest()[:16]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_dump(obj, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n", encoding="utf-8")


def _jsonable(x):
    if hasattr(x, "item"):
        return x.item()
    if hasattr(x, "as_dict"):
        return x.as_dict()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


class Stage:
    """Output directory of one stage, with provenance bookkeeping."""

    def __init__(self, cfg: dict, stage: str, dataset: str):
        self.cfg = cfg
        self.dir = Path(cfg["outdir"]) / stage / dataset
        self.dir.mkdir(parents=True, exist_ok=True)
        self.stage, self.dataset = stage, dataset
        self.inputs: dict[str, str] = {}
        self.partial: list[str] = []

    def provenance(self) -> dict:
        return {"stage": self.stage, "dataset": self.dataset, "seed": self.cfg["seed"],
                "config_digest": config_digest(self.cfg), "inputs": dict(sorted(self.inputs.items()))}

    def use(self, path) -> Path:
        path = Path(path)
        if not path.exists():
            raise CLIError(f"missing input {path}")
        self.inputs[str(path)] = file_digest(path)
        return path

    def path(self, name: str) -> Path:
        return self.dir / name

    def write_json(self, name: str, obj: dict) -> Path:
        p = self.path(name)
        _json_dump({**obj, "provenance": self.provenance()}, p)
        return p

    def finish(self) -> Path:
        outputs = {p.name: file_digest(p) for p in sorted(self.dir.iterdir())
                   if p.is_file() and p.name != "manifest.json"}
        manifest = {**self.provenance(), "outputs": outputs, "partial": bool(self.partial),
                    "partial_reasons": self.partial}
        return self.write_manifest(manifest)

    def write_manifest(self, manifest: dict) -> Path:
        p = self.path("manifest.json")
        _json_dump(manifest, p)
        return p


def _need(cfg: dict, key: str, hint: str = ""):
    if cfg.get(key) in (None, ""):
        raise CLIError(f"--{key.replace('_', '-')} is required", hint)
    return cfg[key]


def _dataset_path(cfg: dict) -> Path:
    return Path(cfg["outdir"]) / "ingest" / _need(cfg, "dataset") / "dataset.jsonl"


def _load(cfg: dict, stage: Stage) -> Dataset:
    p = _dataset_path(cfg)
    if not p.exists():
        raise CLIError(f"no ingested dataset at {p}", "run `ingest` first")
    return load_dataset(stage.use(p), name=cfg["dataset"])


def _spans(cfg: dict, stage: Stage, dataset: Dataset):
    p = Path(cfg["outdir"]) / "annotate" / cfg["dataset"] / "annotations.jsonl"
    if not p.exists():
        raise CLIError(f"no annotations at {p}", "run `annotate` first")
    return extract_all(dataset, load_precomputed_annotations(stage.use(p), dataset))


# ---------------------------------------------------------------------------
# stages

def cmd_ingest(cfg: dict) -> Stage:
    fmt = cfg["format"]
    if fmt == "fixture":
        from .fixtures import build_fixture

        dataset, anns = build_fixture()
        name = cfg["dataset"] or dataset.name
        dataset = Dataset(name, dataset.pairs)
        stage = Stage(cfg, "ingest", name)
        save_annotations(anns, stage.path("annotations.jsonl"))
    else:
        src = Path(_need(cfg, "input"))
        if fmt == "native_jsonl":
            dataset = load_dataset(src, name=cfg["dataset"])
        elif fmt in ("cliff", "gd21"):
            with src.open(encoding="utf-8") as fh:
                recs = [json.loads(line) for line in fh if line.strip()]
            conv = convert_cliff if fmt == "cliff" else convert_gd21
            dataset = conv(recs, cfg["dataset"] or fmt)
        else:
            raise CLIError(f"unknown format {fmt!r}", "use native_jsonl, cliff, gd21 or fixture")
        stage = Stage(cfg, "ingest", dataset.name)
        stage.use(src)
    save_dataset(dataset, stage.path("dataset.jsonl"))
    stage.write_json("summary.json", {"dataset": dataset.name, "n_pairs": len(dataset)})
    return stage


def cmd_annotate(cfg: dict) -> Stage:
    stage = Stage(cfg, "annotate", _need(cfg, "dataset"))
    dataset = _load(cfg, stage)
    if cfg["annotator"] == "spacy":
        from .annotate import SpacyAnnotator, register_annotator

        annotator = register_annotator(SpacyAnnotator())
        anns = {p.pair_id: annotator(p) for p in dataset}
    elif cfg["annotator"] == "replay":
        src = cfg["annotations"] or Path(cfg["outdir"]) / "ingest" / cfg["dataset"] / "annotations.jsonl"
        if not Path(src).exists():
            raise CLIError(f"no annotation cache at {src}", "pass --annotations or use --annotator spacy")
        annotator = load_precomputed_annotations(stage.use(src), dataset)
        anns = {p.pair_id: annotator(p) for p in dataset}
    else:
        raise CLIError(f"unknown annotator {cfg['annotator']!r}")
    save_annotations(anns, stage.path("annotations.jsonl"))
    spans = extract_all(dataset, load_precomputed_annotations(stage.path("annotations.jsonl"), dataset))
    stats = dataset_stats(dataset, spans)
    stage.write_json("stats.json", stats.as_dict())
    return stage


def _backend_config(cfg: dict, role: str, style: str) -> BackendConfig:
    qa = role == "qa"
    provider = (cfg["qa_backend"] if qa else None) or cfg["backend"]
    cache = (cfg["qa_cache"] if qa else None) or cfg["cache"]
    endpoint = (cfg["qa_endpoint"] if qa else None) or cfg["endpoint"]
    if provider == "service":
        endpoint = endpoint or os.environ.get("FCL_QA_ENDPOINT" if qa else "FCL_QG_ENDPOINT")
        if not endpoint:
            raise CLIError("service backend needs an endpoint", "pass --endpoint or set FCL_QG_ENDPOINT")
    else:
        endpoint = None
    if provider == "replay" and not cache:
        raise CLIError("replay backend needs --cache")
    qps = cfg["questions_per_span"] or (3 if style == "QE" else 1)
    return BackendConfig(provider=provider, endpoint=endpoint, cache_path=cache if provider == "replay" else None,
                         questions_per_span=qps, max_concurrency=cfg["max_concurrency"],
                         timeout=cfg["timeout"], retries=cfg["retries"], context_window=cfg["context_window"])


def _make_backends(cfg: dict, style: str, stage: Stage):
    qg_cfg, qa_cfg = _backend_config(cfg, "qg", style), _backend_config(cfg, "qa", style)
    for c in (qg_cfg, qa_cfg):
        if c.cache_path:
            stage.use(c.cache_path)
    qg = make_backend(qg_cfg)
    qa = qg if qa_cfg == qg_cfg else make_backend(qa_cfg, **({"qa_endpoint": qa_cfg.endpoint}
                                                            if qa_cfg.provider == "service" else {}))
    if cfg["record"]:
        qg = RecordingBackend(qg)
        qa = qg if qa_cfg == qg_cfg else RecordingBackend(qa)
    return qg, qa


def _save_recordings(cfg: dict, qg, qa) -> None:
    if not cfg["record"]:
        return
    records = {**getattr(qg, "records", {}), **getattr(qa, "records", {})}
    path = Path(cfg["record"])
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for key in sorted(records):
            fh.write(json.dumps(records[key], sort_keys=True, ensure_ascii=False) + "\n")


def cmd_score(cfg: dict) -> Stage:
    stage = Stage(cfg, "score", _need(cfg, "dataset"))
    dataset = _load(cfg, stage)
    spans = _spans(cfg, stage, dataset)
    metric = cfg["metric"].lower()
    if metric in QA_METRICS:
        config = MetricConfig.for_style(metric)
        qg, qa = _make_backends(cfg, config.style, stage)
        verdicts, report = run_pipeline(dataset, spans, qg, qa, config)
        _save_recordings(cfg, qg, qa)
        dump_verdicts(verdicts, config.style, stage.path(f"{metric}.verdicts.jsonl"))
        stage.write_json(f"{metric}.run.json", report.as_dict())
        if report.errors:
            stage.partial.append(f"{metric}: {len(report.errors)} errored span(s)")
        if report.excluded_pairs:
            stage.partial.append(f"{metric}: {len(report.excluded_pairs)} excluded pair(s)")
    elif metric == "em":
        run = run_em(dataset, spans, load_precomputed_annotations(
            Path(cfg["outdir"]) / "annotate" / cfg["dataset"] / "annotations.jsonl", dataset))
        _write_baseline(stage, "em", run)
    elif metric == "external":
        src = stage.use(_need(cfg, "external_scores"))
        sets = load_external_token_scores(src, dataset)
        name = cfg["external_name"]
        run = run_external(name, sets, dataset, spans, cfg["token_threshold"])
        _write_baseline(stage, name, run)
    else:
        raise CLIError(f"unknown metric {metric!r}", "use qe, qafe, em or external")
    return stage


def _write_baseline(stage: Stage, name: str, run) -> None:
    stage.write_json(f"{name}.scores.json", {
        "system": name, "summary_scores": run.summary_scores, "span_scores": run.span_scores,
        "stats": dict(run.stats)})


def _systems(cfg: dict, stage: Stage, dataset: Dataset, spans) -> dict:
    """``name -> {"summary": items, "span": items, "verdicts": ... | None}`` from score outputs."""
    score_dir = Path(cfg["outdir"]) / "score" / cfg["dataset"]
    if not score_dir.exists():
        raise CLIError(f"no score outputs in {score_dir}", "run `score` first")
    wanted = cfg["systems"]
    pairs = dataset.by_id()
    out = {}
    for p in sorted(score_dir.glob("*.verdicts.jsonl")):
        name = p.name.split(".")[0]
        if wanted and name not in wanted:
            continue
        _, verdicts = load_verdicts(stage.use(p))
        out[name] = {"summary": ev.summary_items(verdicts), "span": ev.span_items(verdicts), "verdicts": verdicts}
    for p in sorted(score_dir.glob("*.scores.json")):
        name = p.name.split(".")[0]
        if wanted and name not in wanted:
            continue
        rec = json.loads(stage.use(p).read_text(encoding="utf-8"))
        from .corpus import derive_summary_gold

        summ = [ev.ScoredItem(pid, s, derive_summary_gold(pairs[pid]), pid)
                for pid, s in sorted(rec["summary_scores"].items())]
        span = [ev.ScoredItem(s.span_id, rec["span_scores"][pid][s.span_id], s.gold_label, pid)
                for pid in sorted(rec["span_scores"]) for s in spans[pid]]
        out[name] = {"summary": summ, "span": span, "verdicts": None}
    if not out:
        raise CLIError(f"no systems found in {score_dir}", "run `score` first")
    return out


def cmd_tune(cfg: dict) -> Stage:
    stage = Stage(cfg, "tune", _need(cfg, "dataset"))
    dataset = _load(cfg, stage)
    spans = _spans(cfg, stage, dataset)
    systems = _systems(cfg, stage, dataset, spans)
    val, test = split_dataset(dataset, cfg["seed"])
    val_ids = [p.pair_id for p in val]
    thresholds = {}
    for name, sys_ in sorted(systems.items()):
        thresholds[name] = {}
        for level in ("summary", "span"):
            items = ev.restrict(sys_[level], val_ids)
            if not items:
                stage.partial.append(f"{name}/{level}: no validation items")
                continue
            t, f1 = ev.tune_threshold(items)
            thresholds[name][level] = {"threshold": t, "validation_f1": f1, "n_items": len(items)}
    stage.write_json("thresholds.json", {"thresholds": thresholds, "validation_pairs": val_ids,
                                         "test_pairs": [p.pair_id for p in test]})
    return stage


def _thresholds(cfg: dict, stage: Stage) -> dict:
    p = Path(cfg["outdir"]) / "tune" / cfg["dataset"] / "thresholds.json"
    if not p.exists():
        raise CLIError(f"no tuned thresholds at {p}", "run `tune` before `evaluate` or `analyze`")
    return json.loads(stage.use(p).read_text(encoding="utf-8"))


def cmd_evaluate(cfg: dict) -> Stage:
    stage = Stage(cfg, "evaluate", _need(cfg, "dataset"))
    tuned = _thresholds(cfg, stage)
    dataset = _load(cfg, stage)
    spans = _spans(cfg, stage, dataset)
    systems = _systems(cfg, stage, dataset, spans)
    test_ids = tuned["test_pairs"]
    reports, roc, sweep, boot = {}, [], [], []
    for level in ("summary", "span"):
        reports[level] = {}
        names = [n for n in sorted(systems) if level in tuned["thresholds"].get(n, {})]
        missing = sorted(set(systems) - set(names))
        if missing:
            raise CLIError(f"systems without a tuned {level} threshold: {', '.join(missing)}",
                           "re-run `tune` after scoring")
        for name in names:
            items = ev.restrict(systems[name][level], test_ids)
            t = tuned["thresholds"][name][level]["threshold"]
            rep = ev.evaluate_f1(items, t, level=level)
            reports[level][name] = rep.as_dict()
            roc += [{"level": level, **r} for r in ev.roc_rows(rep.roc_points, name)]
            sweep += [{"level": level, "system": name, **r} for r in ev.threshold_sweep(items)]
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                res = ev.paired_bootstrap(ev.restrict(systems[a][level], test_ids),
                                          ev.restrict(systems[b][level], test_ids),
                                          resamples=cfg["resamples"], seed=cfg["seed"],
                                          threshold_a=tuned["thresholds"][a][level]["threshold"],
                                          threshold_b=tuned["thresholds"][b][level]["threshold"])
                boot.append({"level": level, "system_a": a, "system_b": b, **res.as_dict()})
    stage.write_json("report.json", {"reports": reports, "bootstrap": boot})
    ev.write_csv(roc, stage.path("roc.csv"), ["level", "system", "fpr", "tpr"])
    ev.write_csv(sweep, stage.path("sweep.csv"),
                 ["level", "system"] + (list(sweep[0].keys())[2:] if sweep else []))
    ev.write_csv(boot, stage.path("bootstrap.csv"),
                 list(boot[0].keys()) if boot else ["level", "system_a", "system_b", "p_value"])
    return stage


def cmd_analyze(cfg: dict) -> Stage:
    stage = Stage(cfg, "analyze", _need(cfg, "dataset"))
    tuned = _thresholds(cfg, stage)
    dataset = _load(cfg, stage)
    spans = _spans(cfg, stage, dataset)
    systems = _systems(cfg, stage, dataset, spans)
    stats = dataset_stats(dataset, spans).as_dict()
    stats_row = {k: v for k, v in stats.items() if k != "ignored_pos_breakdown"}
    pos_rows = [{"pos": k, "pct": v} for k, v in sorted(stats["ignored_pos_breakdown"].items())]
    inherited, accuracy, qstats = [], [], []
    qa = {n: s["verdicts"] for n, s in sorted(systems.items()) if s["verdicts"] is not None}
    for name, verdicts in qa.items():
        inherited.append(analysis.inherited_error_rates(verdicts, dataset, name))
        t = tuned["thresholds"].get(name, {}).get("span", {}).get("threshold")
        if t is not None:
            accuracy.append(analysis.factual_span_accuracy_by_group(verdicts, dataset, t, name))
        qs = analysis.question_stats(verdicts, name, dataset.name)
        if qs:
            qstats.append(qs)
    subset = None
    if qa:
        thr = {n: tuned["thresholds"][n]["span"]["threshold"] for n in systems
               if "span" in tuned["thresholds"].get(n, {})}
        try:
            subset = analysis.common_subset_eval(qa, {n: systems[n]["span"] for n in thr}, thr)
        except ev.EvalError as exc:
            stage.partial.append(f"common subset: {exc}")
    else:
        stage.partial.append("no QA metric verdicts; inherited-error tables are empty")
    tables = {"dataset_stats": [stats_row], "ignored_pos": pos_rows, "inherited_errors": inherited,
              "span_accuracy_by_group": accuracy, "question_stats": qstats}
    for name, rows in tables.items():
        cols = sorted({k for r in rows for k in r}) if rows else ["note"]
        ev.write_csv(rows or [{"note": "empty table"}], stage.path(f"{name}.csv"), cols)
    subset_rows = []
    if subset:
        for name, r in sorted(subset["systems"].items()):
            subset_rows.append({"half": "all", "system": name, "n_spans": r["n_spans"], "f1": r["f1"],
                                "auc": r["auc"]})
        for half, per in sorted(subset["halves"].items()):
            for name, r in sorted(per.items()):
                if r:
                    subset_rows.append({"half": half, "system": name, "n_spans": r["n_spans"], "f1": r["f1"],
                                        "auc": r["auc"]})
    ev.write_csv(subset_rows or [{"note": "empty table"}], stage.path("common_subset.csv"),
                 ["half", "system", "n_spans", "f1", "auc"] if subset_rows else ["note"])
    stage.write_json("analysis.json", {"tables": tables, "common_subset": subset})
    return stage


def cmd_humanqg(cfg: dict) -> Stage:
    from .humanqg import build_nested_question_sets, human_question_totals, load_human_questions, \
        run_humanqg_eval, save_human_questions

    stage = Stage(cfg, "humanqg", _need(cfg, "dataset"))
    dataset = _load(cfg, stage)
    spans = _spans(cfg, stage, dataset)
    if cfg["questions"]:
        sets = load_human_questions(stage.use(cfg["questions"]), dataset, spans)
    elif cfg["synthetic_questions"]:
        sets = build_nested_question_sets(dataset, spans)
        save_human_questions(sets, stage.path("questions.jsonl"))
    else:
        raise CLIError("no human questions given", "pass --questions FILE or --synthetic-questions")
    config = MetricConfig.for_style(cfg["metric"] if cfg["metric"] in QA_METRICS else "qafe")
    _, qa = _make_backends(cfg, config.style, stage)
    res = run_humanqg_eval(dataset, sets, spans, qa, config, seed=cfg["seed"])
    rows = []
    for mode, rep in res.reports.items():
        row = {"mode": mode, "threshold": res.thresholds[mode]}
        if rep is not None:
            row.update({"f1": rep.f1, "auc": rep.auc, "n_items": rep.n_items})
        rows.append(row)
    ev.write_csv(rows, stage.path("modes.csv"), ["mode", "threshold", "f1", "auc", "n_items"])
    ev.write_csv(res.inherited_by_length or [{"note": "empty table"}], stage.path("inherited_by_length.csv"))
    if res.errors:
        stage.partial.append(f"{len(res.errors)} question(s) failed")
    stage.write_json("humanqg.json", {
        "totals": human_question_totals(sets), "modes": rows, "question_length": res.length_stats,
        "inherited_by_bucket": res.inherited_by_bucket, "inherited_by_length": res.inherited_by_length,
        "validation_pairs": res.validation_pairs, "test_pairs": res.test_pairs, "errors": res.errors})
    return stage


def cmd_report(cfg: dict) -> Stage:
    from .report import render_report

    name = _need(cfg, "dataset")
    stage = Stage(cfg, "report", name)
    eval_dir = Path(cfg["outdir"]) / "evaluate" / name
    if not (eval_dir / "roc.csv").exists():
        raise CLIError(f"no evaluation output in {eval_dir}", "run `evaluate` first")
    inputs = sorted(eval_dir.glob("*.csv"))
    analyze_dir = Path(cfg["outdir"]) / "analyze" / name
    if analyze_dir.exists():
        inputs += sorted(analyze_dir.glob("*.csv"))
    for p in inputs:
        stage.use(p)
    render_report(eval_dir, analyze_dir if analyze_dir.exists() else None, stage.dir)
    return stage


COMMANDS = {"ingest": cmd_ingest, "annotate": cmd_annotate, "score": cmd_score, "tune": cmd_tune,
            "evaluate": cmd_evaluate, "analyze": cmd_analyze, "humanqg": cmd_humanqg, "report": cmd_report}


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--outdir")
    common.add_argument("--seed", type=int)
    common.add_argument("--dataset", help="dataset name (also the output subdirectory)")
    common.add_argument("-v", "--verbose", action="store_true")

    backend = argparse.ArgumentParser(add_help=False)
    backend.add_argument("--backend", choices=["stub", "replay", "service"])
    backend.add_argument("--qa-backend", choices=["stub", "replay", "service"])
    backend.add_argument("--cache", help="replay cache for QG (and QA unless --qa-cache)")
    backend.add_argument("--qa-cache")
    backend.add_argument("--record", help="write every backend request/response to this replay cache")
    backend.add_argument("--endpoint")
    backend.add_argument("--qa-endpoint")
    backend.add_argument("--questions-per-span", type=int)
    backend.add_argument("--context-window", type=int)
    backend.add_argument("--max-concurrency", type=int)
    backend.add_argument("--timeout", type=float)
    backend.add_argument("--retries", type=int)
    backend.add_argument("--metric")

    p = argparse.ArgumentParser(prog="qaspan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("ingest", parents=[common])
    s.add_argument("--input")
    s.add_argument("--format", choices=["native_jsonl", "cliff", "gd21", "fixture"])
    s = sub.add_parser("annotate", parents=[common])
    s.add_argument("--annotator", choices=["replay", "spacy"])
    s.add_argument("--annotations", help="precomputed annotation cache")
    s = sub.add_parser("score", parents=[common, backend])
    s.add_argument("--external-scores")
    s.add_argument("--external-name")
    s.add_argument("--token-threshold", type=float)
    for name in ("tune", "evaluate", "analyze"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--systems", nargs="+")
        if name == "evaluate":
            s.add_argument("--resamples", type=int)
    s = sub.add_parser("humanqg", parents=[common, backend])
    s.add_argument("--questions", help="human question file (JSON lines)")
    s.add_argument("--synthetic-questions", action="store_true",
                   help="build nested question sets from the stub generator")
    sub.add_parser("report", parents=[common])
    return p


def _flag_partial(cfg: dict | None, command: str, err: dict) -> None:
    """Mark a stage directory left behind by a failed run so later stages do not trust it."""
    if not cfg or not cfg.get("dataset"):
        return
    d = Path(cfg["outdir"]) / command / cfg["dataset"]
    if d.is_dir():
        _json_dump({"partial": True, "error": err, "seed": cfg["seed"], "config_digest": config_digest(cfg)},
                   d / "manifest.json")


def run_command(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = None
    try:
        cfg = resolve_config(args)
        stage = COMMANDS[args.command](cfg)
        manifest = stage.finish()
        print(json.dumps({"status": "partial" if stage.partial else "ok", "stage": args.command,
                          "outdir": str(stage.dir), "manifest": str(manifest),
                          "partial_reasons": stage.partial}, sort_keys=True))
        return 0
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON error
        err = {"status": "error", "stage": args.command, "error": type(exc).__name__, "message": str(exc),
               "hint": getattr(exc, "hint", "")}
        if args.verbose:
            err["traceback"] = traceback.format_exc()
        _flag_partial(cfg, args.command, err)
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 1 if isinstance(exc, CLIError) else 2


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
