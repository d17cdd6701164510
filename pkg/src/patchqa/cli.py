"""Command-line entry point.

Exit status: 0 on success, 1 on a usage error, 2 on a data or validation error.
"""

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import POOLINGS, load_config
from .errors import ConfigError, PatchQAError
from .io import load_manifest, read_ply

log = logging.getLogger("patchqa")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--preset", choices=("desk", "full"), default="desk")
    p.add_argument("--seed", type=int, help="seed for data, sampling and training")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--json", action="store_true", help="print one JSON object instead of tables")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("overrides", nargs="*", metavar="key=value",
                   help="config overrides such as train.epochs1=5")


def build_parser():
    parser = Parser(prog="patchqa", description="Patch-based no-reference point cloud quality.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=Parser, metavar="command")
    sub.required = True

    p = sub.add_parser("gen-data", help="write the synthetic distorted dataset and manifest")
    _common(p)

    p = sub.add_parser("extract-patches", help="extract and cache patches for a manifest")
    _common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--dump-ply", action="store_true", help="also write every patch as PLY")

    for name, text in (("train-stage1", "train the patch quality regressor"),
                       ("train-stage2", "train the correlation network")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--manifest", type=Path, required=True)
        p.add_argument("--cache", type=Path, help="patch cache from extract-patches")
        if name == "train-stage2":
            p.add_argument("--stage1", type=Path, required=True)

    p = sub.add_parser("evaluate", help="score a split and write the CSV report and figures")
    _common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--cache", type=Path)
    p.add_argument("--stage1", type=Path, required=True)
    p.add_argument("--cora", type=Path)
    p.add_argument("--pooling", choices=POOLINGS)
    p.add_argument("--split", default="test", choices=("train", "test"))

    p = sub.add_parser("predict", help="score one cloud")
    _common(p)
    p.add_argument("--cloud", type=Path, required=True)
    p.add_argument("--stage1", type=Path, required=True)
    p.add_argument("--cora", type=Path)
    p.add_argument("--pooling", choices=POOLINGS)

    p = sub.add_parser("gradcheck", help="finite-difference checks of every op and tiny networks")
    _common(p)

    p = sub.add_parser("oracle-check", help="compare sampling and labels to brute-force oracles")
    _common(p)
    p.add_argument("--instances", type=int, default=1000)
    return parser


def _overrides(args):
    pairs = {}
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"override {item!r} is not key=value")
        pairs[key.strip()] = value.strip()
    if args.seed is not None:
        for key in ("data.seed", "sampler.seed", "train.seed"):
            pairs.setdefault(key, str(args.seed))
    return pairs


def _config(args):
    return load_config(args.config, _overrides(args), preset=args.preset)


def _out(args, default):
    out = args.out or Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_match(cfg, ckpt_cfg, section, names, source):
    ours, theirs = getattr(cfg, section), getattr(ckpt_cfg, section)
    diff = [n for n in names if getattr(ours, n) != getattr(theirs, n)]
    if diff:
        detail = ", ".join(f"{section}.{n}={getattr(ours, n)!r} vs {getattr(theirs, n)!r}"
                           for n in diff)
        raise ConfigError(f"config does not match {source}: {detail}")


SAMPLER_KEYS = ("C", "K", "R_t", "R_s", "radius", "seed")
ARKP_KEYS = ("d_branch", "pre_width", "group_k", "level_divisors", "widths", "head_hidden",
             "coord_scale")
CORA_KEYS = ("hidden", "blocks", "heads", "ff_mult")


def _load_models(args, cfg):
    from .training import load_stage1, load_stage2

    stage1, s1_cfg, s1_meta = load_stage1(args.stage1)
    _require_match(cfg, s1_cfg, "sampler", SAMPLER_KEYS, args.stage1)
    _require_match(cfg, s1_cfg, "arkp", ARKP_KEYS, args.stage1)
    cora, c_meta = None, {}
    if args.cora is not None:
        cora, c_cfg, c_meta = load_stage2(args.cora)
        _require_match(cfg, c_cfg, "cora", CORA_KEYS, args.cora)
        _require_match(cfg, c_cfg, "sampler", SAMPLER_KEYS, args.cora)
    return stage1, s1_meta, cora, c_meta


def _patches(args, cfg, manifest, entries):
    from .training import extract_all, load_patch_cache

    if args.cache is None:
        return extract_all(entries, cfg.sampler)
    cached = {c.name: c for c in load_patch_cache(args.cache, cfg.sampler)}
    missing = [e.name for e in entries if e.name not in cached]
    if missing:
        raise ConfigError(f"patch cache {args.cache} lacks {len(missing)} clouds, "
                          f"e.g. {missing[0]!r}")
    # the manifest is authoritative for scores and splits
    out = []
    for e in entries:
        c = cached[e.name]
        c.mos, c.split = e.mos, e.split
        out.append(c)
    return out


def cmd_gen_data(args, cfg):
    from .synthetic import build_dataset

    out = _out(args, "data")
    manifest = build_dataset(cfg.data, out)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    return {"manifest": str(out / "manifest.csv"), "clouds": len(manifest),
            "train": len(manifest.split("train")), "test": len(manifest.split("test"))}


def cmd_extract_patches(args, cfg):
    from .geometry import dump_patches, extract_patches
    from .training import extract_all, save_patch_cache

    manifest = load_manifest(args.manifest, (0.0, cfg.data.mos_max))
    out = _out(args, "patches")
    clouds = extract_all(manifest.entries, cfg.sampler)
    save_patch_cache(clouds, cfg.sampler, out)
    if args.dump_ply:
        for e in manifest.entries:
            dump_patches(extract_patches(read_ply(e.file), cfg.sampler), out / "ply")
    return {"cache": str(out), "clouds": len(clouds), "patches_per_cloud": cfg.sampler.C}


def cmd_train_stage1(args, cfg):
    from .plotting import loss_curves
    from .training import save_stage1, train_stage1

    manifest = load_manifest(args.manifest, (0.0, cfg.data.mos_max))
    entries = manifest.split("train")
    if not entries:
        raise ConfigError("the manifest has no train rows")
    clouds = _patches(args, cfg, manifest, entries)
    model, history = train_stage1(clouds, cfg)
    out = _out(args, "runs")
    save_stage1(out / "stage1.ckpt", model, cfg, history)
    _write_losses(out / "stage1_loss.csv", history.losses)
    loss_curves({"stage 1 (MSE)": history.losses}, out / "stage1_loss.png")
    return {"checkpoint": str(out / "stage1.ckpt"), "epochs": len(history.losses),
            "first_loss": history.losses[0], "final_loss": history.losses[-1]}


def cmd_train_stage2(args, cfg):
    from .plotting import loss_curves
    from .training import load_stage1, save_stage2, train_stage2

    stage1, s1_cfg, _ = load_stage1(args.stage1)
    _require_match(cfg, s1_cfg, "sampler", SAMPLER_KEYS, args.stage1)
    _require_match(cfg, s1_cfg, "arkp", ARKP_KEYS, args.stage1)
    manifest = load_manifest(args.manifest, (0.0, cfg.data.mos_max))
    entries = manifest.split("train")
    if not entries:
        raise ConfigError("the manifest has no train rows")
    clouds = _patches(args, cfg, manifest, entries)
    cora, history = train_stage2(clouds, stage1, cfg)
    out = _out(args, "runs")
    save_stage2(out / "cora.ckpt", cora, cfg, history)
    _write_losses(out / "stage2_loss.csv", history.losses)
    loss_curves({"stage 2 (cross entropy)": history.losses}, out / "stage2_loss.png")
    return {"checkpoint": str(out / "cora.ckpt"), "epochs": len(history.losses),
            "first_loss": history.losses[0], "final_loss": history.losses[-1],
            **history.extra}


def _write_losses(path, losses):
    lines = ["epoch,loss"] + [f"{i},{v!r}" for i, v in enumerate(losses, start=1)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_evaluate(args, cfg):
    from .evaluation import check_files, evaluate, write_report
    from .plotting import loss_curves, scatter_report

    pooling = args.pooling or cfg.train.pooling
    if pooling == "cora" and args.cora is None:
        raise UsageError("--pooling cora needs --cora")
    stage1, s1_meta, cora, c_meta = _load_models(args, cfg)
    manifest = load_manifest(args.manifest, (0.0, cfg.data.mos_max))
    entries = manifest.split(args.split)
    if args.cache is None:
        check_files(manifest, args.split)
        patches = None
    else:
        patches = {c.name: c for c in _patches(args, cfg, manifest, entries)}
    report = evaluate(manifest, stage1, cora, cfg, pooling, args.split, patches)
    out = _out(args, "reports")
    stem = f"report_{args.split}_{pooling}"
    write_report(report, out / f"{stem}.csv")
    scatter_report([report], out / f"{stem}.png", title=f"{args.split} split")
    curves = {"stage 1 (MSE)": s1_meta.get("losses", [])}
    if c_meta.get("losses"):
        curves["stage 2 (cross entropy)"] = c_meta["losses"]
    if all(curves.values()):
        loss_curves(curves, out / "training_loss.png")
    result = report.summary()
    result["report"] = str(out / f"{stem}.csv")
    result["_records"] = report.records
    return result


def cmd_predict(args, cfg):
    from .evaluation import predict

    pooling = args.pooling or cfg.train.pooling
    if pooling == "cora" and args.cora is None:
        raise UsageError("--pooling cora needs --cora")
    stage1, _, cora, _ = _load_models(args, cfg)
    record = predict(read_ply(args.cloud), stage1, cora, cfg, pooling)
    return {"name": record.name, "pooling": pooling, "q_pc": record.q_pc,
            "q_patch": record.q_patch.tolist(), "w_patch": record.w_patch.tolist(),
            "labels": None if record.labels is None else record.labels.tolist()}


def cmd_gradcheck(args, cfg):
    from .checks.suites import run_gradcheck_suite

    results = run_gradcheck_suite(cfg.train.seed)
    return {"passed": all(r.passed for r in results),
            "results": [{"name": r.name, "max_rel_err": r.max_rel_err, "checked": r.checked,
                         "skipped": r.skipped, "tolerance": r.tolerance, "passed": r.passed}
                        for r in results]}


def cmd_oracle_check(args, cfg):
    from .checks.oracles import run_oracle_suite

    if args.instances < 1:
        raise UsageError("--instances must be >= 1")
    results = run_oracle_suite(args.instances, cfg.train.seed)
    return {"passed": all(r.passed for r in results),
            "results": [{"name": r.name, "instances": r.instances, "mismatches": r.mismatches,
                         "passed": r.passed} for r in results]}


COMMANDS = {
    "gen-data": cmd_gen_data,
    "extract-patches": cmd_extract_patches,
    "train-stage1": cmd_train_stage1,
    "train-stage2": cmd_train_stage2,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "gradcheck": cmd_gradcheck,
    "oracle-check": cmd_oracle_check,
}


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def render(command, result, stream):
    """Human-readable tables for each command's result."""
    w = stream.write
    if command in ("gradcheck", "oracle-check"):
        for r in result["results"]:
            status = "PASS" if r["passed"] else "FAIL"
            if command == "gradcheck":
                w(f"{status}  {r['name']:<20} max rel err {r['max_rel_err']:.3e} "
                  f"(tol {r['tolerance']:.0e}, {r['checked']} checked, {r['skipped']} at kinks)\n")
            else:
                w(f"{status}  {r['name']:<30} {r['mismatches']} mismatches "
                  f"in {r['instances']} instances\n")
        return
    if command == "predict":
        w(f"{result['name']}  q_pc = {result['q_pc']:.6g}  ({result['pooling']} pooling)\n")
        w("patch  q_patch      w_patch      label\n")
        labels = result["labels"] or [None] * len(result["q_patch"])
        names = ("strong", "average", "weak")
        for i, (q, wt, lab) in enumerate(zip(result["q_patch"], result["w_patch"], labels)):
            w(f"{i:>5}  {q:<11.6g}  {wt:<11.6g}  {names[lab] if lab is not None else '-'}\n")
        return
    if command == "evaluate":
        w("name                              mos        q_pc       abs_err\n")
        for r in result["_records"]:
            w(f"{r.name:<32}  {r.mos:<9.4g}  {r.q_pc:<9.4g}  {abs(r.q_pc - r.mos):.4g}\n")
    for k, v in result.items():
        if not k.startswith("_"):
            w(f"{k}: {_fmt(v)}\n")


def _jsonable(result):
    return {k: v for k, v in result.items() if not k.startswith("_")}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    start = time.perf_counter()
    try:
        cfg = _config(args)
        result = COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"patchqa: error: {exc}", file=sys.stderr)
        return 1
    except (PatchQAError, OSError, KeyError) as exc:
        print(f"patchqa {args.command}: {exc}", file=sys.stderr)
        return 2
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - start)
    if args.json:
        json.dump(_jsonable(result), sys.stdout, sort_keys=True, default=_json_default)
        sys.stdout.write("\n")
    else:
        render(args.command, result, sys.stdout)
    if "passed" in result and not result["passed"]:
        return 2
    return 0


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(type(obj).__name__)


if __name__ == "__main__":
    sys.exit(main())
