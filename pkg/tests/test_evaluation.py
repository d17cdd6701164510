import math
import shutil

import numpy as np
import pytest

from patchqa.errors import ConfigError, ParseError
from patchqa.evaluation import (
    MissingFilesError,
    evaluate,
    patches_path,
    predict,
    read_patch_table,
    read_report,
    score_patches,
    write_report,
)
from patchqa.io import DatasetManifest, ManifestEntry, read_ply
from patchqa.plotting import loss_curves, patch_weights, scatter_report


@pytest.fixture(scope="module")
def reports(tiny_run):
    r = tiny_run
    patches = {c.name: c for c in r["test"]}
    return {p: evaluate(r["manifest"], r["stage1"], r["cora"], r["cfg"], p, "test", patches)
            for p in ("average", "cora")}


def test_one_record_per_cloud(tiny_run, reports):
    names = [e.name for e in tiny_run["manifest"].split("test")]
    for rep in reports.values():
        assert [r.name for r in rep.records] == names


def test_patch_scores_do_not_depend_on_pooling(reports):
    for a, b in zip(reports["average"].records, reports["cora"].records):
        assert np.array_equal(a.q_patch, b.q_patch)
        assert np.array_equal(a.labels, b.labels)


def test_average_weights_and_pooled_score(reports):
    for r in reports["average"].records:
        assert np.all(r.w_patch == 1 / len(r.q_patch))
        assert math.isclose(r.q_pc, r.q_patch.mean(), rel_tol=1e-12)


def test_cora_pool_is_weighted_mean(reports):
    for r in reports["cora"].records:
        assert np.all(r.w_patch > 0)
        assert math.isclose(r.q_pc, (r.w_patch @ r.q_patch) / r.w_patch.sum(), rel_tol=1e-12)
        lo, hi = r.q_patch.min(), r.q_patch.max()
        assert lo - 1e-9 <= r.q_pc <= hi + 1e-9


def test_reading_files_matches_cached_patches(tiny_run, reports):
    r = tiny_run
    rep = evaluate(r["manifest"], r["stage1"], r["cora"], r["cfg"], "cora", "test")
    for a, b in zip(rep.records, reports["cora"].records):
        assert a.q_pc == b.q_pc


def test_predict_equals_evaluate(tiny_run, reports):
    entry = tiny_run["manifest"].split("test")[0]
    rec = predict(read_ply(entry.file), tiny_run["stage1"], tiny_run["cora"], tiny_run["cfg"])
    assert rec.q_pc == reports["cora"].records[0].q_pc
    assert math.isnan(rec.mos)


def test_cora_pooling_needs_model(tiny_run):
    with pytest.raises(ConfigError):
        score_patches(tiny_run["test"][0], tiny_run["stage1"], None, tiny_run["cfg"], "cora")
    with pytest.raises(ConfigError):
        score_patches(tiny_run["test"][0], tiny_run["stage1"], None, tiny_run["cfg"], "median")


def test_report_roundtrip(reports, tmp_path):
    rep = reports["cora"]
    path = write_report(rep, tmp_path / "report.csv")
    back = read_report(path)
    assert (back.pooling, back.split) == ("cora", "test")
    assert (back.plcc, back.srcc, back.rmse) == (rep.plcc, rep.srcc, rep.rmse)
    assert [(r.name, r.mos, r.q_pc) for r in back.records] == \
        [(r.name, r.mos, r.q_pc) for r in rep.records]
    table = read_patch_table(patches_path(path))
    for r in rep.records:
        q, w, labels = table[r.name]
        assert np.array_equal(q, r.q_patch) and np.array_equal(w, r.w_patch)
        assert len(labels) == len(r.q_patch)


def test_report_parse_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("name,mos\n")
    with pytest.raises(ParseError):
        read_report(p)
    p.write_text("name,mos,q_pc,abs_err\na,1.0,x,1\n# pooling=cora\n")
    with pytest.raises(ParseError, match="line 2"):
        read_report(p)
    p.write_text("name,mos,q_pc,abs_err\na,1.0,2.0,1.0\n# pooling=cora\n")
    with pytest.raises(ParseError, match="plcc"):
        read_report(p)


def test_missing_files_listed_by_row(tiny_run, tmp_path):
    entries = tiny_run["manifest"].split("test")[:3]
    copies = []
    for e in entries:
        dst = tmp_path / (e.name + ".ply")
        shutil.copy(e.file, dst)
        copies.append(ManifestEntry(dst, e.mos, "test"))
    (tmp_path / (entries[1].name + ".ply")).unlink()
    manifest = DatasetManifest(copies, tmp_path)
    with pytest.raises(MissingFilesError) as info:
        evaluate(manifest, tiny_run["stage1"], tiny_run["cora"], tiny_run["cfg"], "cora")
    assert info.value.rows == [(3, copies[1].file)]
    assert "row 3" in str(info.value)


def test_figures_are_written_and_reproducible(reports, tiny_run, tmp_path):
    scatter_report(list(reports.values()), tmp_path / "a.png", "test")
    scatter_report(list(reports.values()), tmp_path / "b.png", "test")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    assert (tmp_path / "a.png").read_bytes()[:4] == b"\x89PNG"
    loss_curves({"stage 1": tiny_run["h1"].losses}, tmp_path / "loss.png")
    patch_weights(reports["cora"].records[0], tmp_path / "w.png")
    assert (tmp_path / "loss.png").stat().st_size > 0 and (tmp_path / "w.png").stat().st_size > 0
