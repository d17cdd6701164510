"""Whole-cloud prediction, split evaluation and the CSV report format.

Report layout (``report.csv``)::

    name,mos,q_pc,abs_err
    sphere00_color_noise_2,50.0,48.91...,1.08...
    # pooling=cora,split=test,n=75
    # plcc=...,srcc=...,rmse=...

Per-patch values go to a companion ``report_patches.csv`` with columns
``name,patch,q_patch,w_patch,label``.  Floats are written with ``repr`` so a
report re-parses to the exact in-memory values.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cora import (
    LABEL_NAMES,
    QualityRecord,
    average_pool,
    correlation_weight_pool,
    weights_from_logits,
)
from .config import POOLINGS
from .errors import ConfigError, DomainError, ParseError
from .io import read_ply
from .metrics import plcc, rmse, srcc
from .training import CloudPatches, parallel_map, patch_seeds, prepare_cloud

REPORT_HEADER = ["name", "mos", "q_pc", "abs_err"]
PATCH_HEADER = ["name", "patch", "q_patch", "w_patch", "label"]


class MissingFilesError(DomainError):
    def __init__(self, rows):
        self.rows = rows
        super().__init__("; ".join(f"row {r}: missing file {f}" for r, f in rows))


def score_patches(cp, stage1, cora, cfg, pooling, mos=math.nan):
    """QualityRecord for one cloud's cached patches."""
    if pooling not in POOLINGS:
        raise ConfigError(f"unknown pooling {pooling!r}")
    stage1.eval()
    C = len(cp.texture)
    f, q = stage1(cp.texture, cp.structure, patch_seeds(cfg.train.seed, "eval", cp.name, C))
    q = q.data.copy()
    labels = None
    if cora is not None:
        cora.eval()
        logits = cora(f.data[None]).data[0]
        labels = np.argmax(logits, axis=-1)
    if pooling == "average":
        w = np.full(C, 1.0 / C)
        q_pc = average_pool(q)
    else:
        if cora is None:
            raise ConfigError("pooling=cora needs a CORA checkpoint")
        w = weights_from_logits(logits, cfg.cora.class_weights, cfg.cora.softmax_axis)
        q_pc = correlation_weight_pool(q, w)
    return QualityRecord(cp.name, mos, q, w, q_pc, labels, pooling)


def predict(cloud, stage1, cora, cfg, pooling="cora", mos=math.nan):
    tex, struct, centers = prepare_cloud(cloud, cfg.sampler)
    cp = CloudPatches(cloud.name, mos, "", tex, struct, centers)
    return score_patches(cp, stage1, cora, cfg, pooling, mos)


@dataclass
class EvalReport:
    records: list
    pooling: str
    split: str = "test"
    plcc: float = math.nan
    srcc: float = math.nan
    rmse: float = math.nan
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_records(cls, records, pooling, split="test"):
        report = cls(records, pooling, split)
        if len(records) >= 2:
            pred = [r.q_pc for r in records]
            mos = [r.mos for r in records]
            report.plcc, report.srcc, report.rmse = plcc(pred, mos), srcc(pred, mos), rmse(pred, mos)
        return report

    def summary(self):
        return {"pooling": self.pooling, "split": self.split, "n": len(self.records),
                "plcc": self.plcc, "srcc": self.srcc, "rmse": self.rmse}


def check_files(manifest, split):
    missing = [(i + 2, e.file) for i, e in enumerate(manifest.entries)
               if e.split == split and not Path(e.file).is_file()]
    if missing:
        raise MissingFilesError(missing)


def evaluate(manifest, stage1, cora, cfg, pooling="cora", split="test", patches=None):
    """Predict every cloud of ``split``.

    ``patches`` may hold pre-extracted CloudPatches keyed by cloud name.
    """
    entries = manifest.split(split)
    if not entries:
        raise DomainError(f"split {split!r} is empty")
    if patches is None:
        check_files(manifest, split)

    def run(entry):
        cp = patches[entry.name] if patches is not None else None
        if cp is None:
            cloud = read_ply(entry.file)
            tex, struct, centers = prepare_cloud(cloud, cfg.sampler)
            cp = CloudPatches(cloud.name, entry.mos, split, tex, struct, centers)
        return score_patches(cp, stage1, cora, cfg, pooling, entry.mos)

    return EvalReport.from_records(parallel_map(run, entries), pooling, split)


def patches_path(path):
    path = Path(path)
    return path.with_name(path.stem + "_patches.csv")


def write_report(report, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in report.records:
            w.writerow([r.name, repr(float(r.mos)), repr(float(r.q_pc)),
                        repr(abs(float(r.q_pc) - float(r.mos)))])
        fh.write(f"# pooling={report.pooling},split={report.split},n={len(report.records)}\n")
        fh.write(f"# plcc={report.plcc!r},srcc={report.srcc!r},rmse={report.rmse!r}\n")
    with open(patches_path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PATCH_HEADER)
        for r in report.records:
            for i, (q, wt) in enumerate(zip(r.q_patch, r.w_patch)):
                label = LABEL_NAMES[r.labels[i]] if r.labels is not None else ""
                w.writerow([r.name, i, repr(float(q)), repr(float(wt)), label])
    return path


def _trailer(line, lineno):
    out = {}
    for part in line[1:].strip().split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise ParseError(f"malformed trailer field {part!r}", lineno)
        out[key.strip()] = value.strip()
    return out


def read_report(path):
    """Parse a report CSV back into an EvalReport (records carry no patch data)."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].split(",") != REPORT_HEADER:
        raise ParseError(f"header must be {','.join(REPORT_HEADER)!r}", 1)
    records, meta = [], {}
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("#"):
            meta.update(_trailer(line, lineno))
            continue
        fields = line.split(",")
        if len(fields) != 4:
            raise ParseError(f"expected 4 fields, got {len(fields)}", lineno)
        try:
            mos, q_pc = float(fields[1]), float(fields[2])
        except ValueError:
            raise ParseError(f"unparsable number in {line!r}", lineno) from None
        records.append(QualityRecord(fields[0], mos, None, None, q_pc, None, meta.get("pooling", "")))
    for key in ("pooling", "plcc", "srcc", "rmse"):
        if key not in meta:
            raise ParseError(f"missing trailer field {key!r}", len(lines))
    report = EvalReport(records, meta["pooling"], meta.get("split", ""),
                        float(meta["plcc"]), float(meta["srcc"]), float(meta["rmse"]))
    for r in records:
        r.pooling = report.pooling
    return report


def read_patch_table(path):
    """``{name: (q_patch, w_patch, labels)}`` from a per-patch CSV."""
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != PATCH_HEADER:
            raise ParseError(f"header must be {','.join(PATCH_HEADER)!r}", 1)
        for name, _, q, w, label in reader:
            qs, ws, ls = rows.setdefault(name, ([], [], []))
            qs.append(float(q))
            ws.append(float(w))
            ls.append(label)
    return {k: (np.array(q), np.array(w), ls) for k, (q, w, ls) in rows.items()}
