"""Command-line front door.

Subcommands: poison, stealth, eval, analyze, synth. Results go to stdout and
the --out directory; progress and warnings go to stderr. Exit codes: 0 on
success, 1 on config or input validation problems, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import traceback
from pathlib import Path

import numpy as np

from . import edgegen, metrics, pipeline
from .errors import ConfigError, DatasetError, HGPoisonError
from .hetgraph import derive_roles, load_dataset, save_dataset

log = logging.getLogger("hgpoison")


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; route through ConfigError so
    # usage problems land on exit code 1 like every other validation error.
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hgpoison", description="Backdoor poisoning toolkit for heterogeneous graphs")
    sub = p.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("poison", help="inject triggers into a dataset")
    sp.add_argument("--dataset", required=True, help="clean dataset directory")
    sp.add_argument("--config", help="JSON attack config; flags override file values")
    sp.add_argument("--signals", help="surrogate signals directory (attention.csv, embeddings.csv)")
    sp.add_argument("--out", required=True, help="output directory for the poisoned dataset")
    sp.add_argument("--target-class", type=int, dest="target_class")
    sp.add_argument("--trigger-type", dest="trigger_type")
    sp.add_argument("--strategy", choices=pipeline.STRATEGIES)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--rate-train", type=float, dest="poison_rate_train")
    sp.add_argument("--rate-test", type=float, dest="poison_rate_test")
    sp.set_defaults(func=cmd_poison)

    sp = sub.add_parser("stealth", help="score a poisoned dataset against its clean original")
    sp.add_argument("--clean", required=True)
    sp.add_argument("--poisoned", required=True)
    sp.add_argument("--w-feat", type=float, default=0.5, dest="w_feat")
    sp.add_argument("--w-struct", type=float, default=0.5, dest="w_struct")
    sp.add_argument("--out", default=".", help="directory for report.json")
    sp.set_defaults(func=cmd_stealth)

    sp = sub.add_parser("eval", help="compute ASR and CAD from prediction files")
    sp.add_argument("--poisoned", required=True)
    sp.add_argument("--clean-preds", required=True, dest="clean_preds")
    sp.add_argument("--backdoor-preds", required=True, dest="backdoor_preds")
    sp.add_argument("--out", default=".", help="directory for report.json")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("analyze", help="summarize a signals directory as plot-ready CSVs")
    sp.add_argument("--signals", required=True)
    sp.add_argument("--out", default=".")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    sp.add_argument("--spec", required=True, help="JSON shape spec")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)
    return p


def cmd_poison(args) -> int:
    g = load_dataset(args.dataset)
    merged = {}
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            raise ConfigError(f"config file {cfg_path} not found")
        try:
            merged.update(json.loads(cfg_path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    for key in ("target_class", "trigger_type", "strategy", "seed", "poison_rate_train", "poison_rate_test"):
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    cfg = pipeline.AttackConfig.from_dict(merged)

    roles = derive_roles(g, g.primary_type, cfg.trigger_type)
    signals = None
    if args.signals:
        signals = edgegen.load_signals(args.signals, g)
    elif cfg.strategy != "random":
        log.warning("no --signals directory given; falling back to uniform attention and feature-based embeddings")
    pg = pipeline.run_attack(g, roles, cfg, signals)
    pipeline.export(pg, args.out)
    n_edges = sum(len(v) for v in pg.injected_edges.values())
    log.info("strategy=%s triggers=%d directed_edges=%d flips=%d",
             cfg.strategy, len(pg.injected_nodes), n_edges, len(pg.flipped_labels))
    print(f"poisoned dataset written to {args.out} ({len(pg.injected_nodes)} triggers, {n_edges} directed edges)")
    return 0


def cmd_stealth(args) -> int:
    clean = load_dataset(args.clean)
    pg = pipeline.load_poisoned(args.poisoned)
    weights = (args.w_feat, args.w_struct)
    if abs(sum(weights) - 1.0) > 1e-9:
        log.warning("weights sum to %s, not 1; score range is no longer (0, 1]", sum(weights))
    rep = metrics.stealthiness(clean, pg, weights)
    print(f"mean_wd {rep.mean_wd!r}")
    print(f"sim_feat {rep.sim_feat!r}")
    print(f"degree_gap {rep.degree_gap!r}")
    print(f"sim_struct {rep.sim_struct!r}")
    print(f"stealthiness {rep.score!r}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics.write_report(rep.to_dict(), out / "report.json")
    return 0


def cmd_eval(args) -> int:
    root = Path(args.poisoned)
    mpath = root / "poison_manifest.json"
    if not mpath.is_file():
        raise DatasetError(f"missing file poison_manifest.json in {root}")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    spath = root / "splits.json"
    if not spath.is_file():
        raise DatasetError(f"missing file splits.json in {root}")
    splits = json.loads(spath.read_text(encoding="utf-8"))

    y_t = int(manifest["config"]["target_class"])
    poisoned_test = [int(i) for i in manifest["poisoned_test"]]
    clean_test = sorted(set(int(i) for i in splits["test"]) - set(poisoned_test))
    if not clean_test:
        raise DatasetError("test split has no clean nodes left for accuracy")

    g = load_dataset(root)
    clean_preds = metrics.load_predictions(args.clean_preds, "clean-model")
    backdoor_preds = metrics.load_predictions(args.backdoor_preds, "backdoor-model")

    acc_clean = metrics.accuracy(clean_preds, clean_test, g.labels)
    acc_backdoor = metrics.accuracy(backdoor_preds, clean_test, g.labels)
    asr_val = metrics.asr(backdoor_preds, poisoned_test, y_t)
    cad_val = metrics.cad(acc_clean, acc_backdoor)
    print(f"asr {asr_val!r}")
    print(f"cad {cad_val!r}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics.write_report(
        {
            "asr": asr_val,
            "cad": cad_val,
            "acc_clean_model": acc_clean,
            "acc_backdoor_model": acc_backdoor,
            "n_poisoned_test": len(poisoned_test),
            "n_clean_test": len(clean_test),
            "target_class": y_t,
        },
        out / "report.json",
    )
    return 0


def cmd_analyze(args) -> int:
    root = Path(args.signals)
    att_path = root / "attention.csv"
    if not att_path.is_file():
        raise DatasetError(f"missing file attention.csv in {root}")
    mass: dict[tuple[str, int], float] = {}
    lines = att_path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "layer,src_type,src_id,dst_type,dst_id,weight":
        raise DatasetError("attention.csv missing expected header")
    for ln in lines[1:]:
        if not ln:
            continue
        _layer, st, si, _dt, _di, w = ln.split(",")
        key = (st, int(si))
        mass[key] = mass.get(key, 0.0) + float(w)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = ["type,id,mass"]
    rows.extend(f"{t},{i},{m!r}" for (t, i), m in sorted(mass.items()))
    (out / "attention_mass.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    vals = np.asarray(sorted(mass.values()), dtype=np.float64)
    hi = float(vals.max()) if len(vals) else 1.0
    if hi <= 0.0:
        hi = 1.0
    counts, edges = np.histogram(vals, bins=20, range=(0.0, hi))
    rows = ["bin_lo,bin_hi,count"]
    rows.extend(f"{edges[k]!r},{edges[k + 1]!r},{int(counts[k])}" for k in range(len(counts)))
    (out / "attention_hist.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    emb_path = root / "embeddings.csv"
    if not emb_path.is_file():
        raise DatasetError(f"missing file embeddings.csv in {root}")
    lines = emb_path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("type,id,"):
        raise DatasetError("embeddings.csv missing expected header")
    per_type: dict[str, dict[int, list[float]]] = {}
    for ln in lines[1:]:
        if not ln:
            continue
        parts = ln.split(",")
        per_type.setdefault(parts[0], {})[int(parts[1])] = [float(v) for v in parts[2:]]

    rows = ["type,id,avg_similarity"]
    for t in sorted(per_type):
        ids = sorted(per_type[t])
        z = np.asarray([per_type[t][i] for i in ids], dtype=np.float64)
        norms = np.linalg.norm(z, axis=1)
        nz = norms > 0.0
        z[nz] /= norms[nz, None]
        n = len(ids)
        if n == 1:
            scores = np.zeros(1)
        else:
            total = z.sum(axis=0)
            scores = (z @ total - (z * z).sum(axis=1)) / (n - 1)
        rows.extend(f"{t},{i},{float(s)!r}" for i, s in zip(ids, scores))
    (out / "similarity_scores.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"analysis written to {out}")
    return 0


def cmd_synth(args) -> int:
    spec = pipeline.SynthSpec.from_json(args.spec)
    g = pipeline.synth_graph(spec, args.seed)
    save_dataset(g, args.out)
    print(f"synthetic dataset written to {args.out} ({g.n_nodes} nodes, {g.n_edges} directed edges)")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except HGPoisonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
