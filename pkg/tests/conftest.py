import pytest

from patchqa.config import desk_config
from patchqa.io import load_manifest
from patchqa.synthetic import build_dataset
from patchqa.training import extract_all, train_stage1, train_stage2

TINY = {
    "data.contents": "5", "data.points": "400", "data.levels": "2",
    "sampler.C": "4", "sampler.K": "64", "sampler.R_t": "32", "sampler.R_s": "16",
    "arkp.d_branch": "8", "arkp.pre_width": "8", "arkp.group_k": "4", "arkp.head_hidden": "8",
    "arkp.widths": "8,8; 8,8; 8,8",
    "cora.hidden": "16", "cora.blocks": "1", "cora.heads": "2",
    "train.epochs1": "3", "train.epochs2": "3",
}


def tiny_config(**extra):
    pairs = dict(TINY)
    pairs.update({k.replace("__", "."): str(v) for k, v in extra.items()})
    return desk_config().with_overrides(pairs).validate()


def tiny_args():
    return [f"{k}={v}" for k, v in TINY.items()]


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    cfg = tiny_config()
    root = tmp_path_factory.mktemp("tiny_data")
    build_dataset(cfg.data, root)
    return cfg, load_manifest(root / "manifest.csv")


@pytest.fixture(scope="session")
def tiny_run(tiny_data):
    cfg, manifest = tiny_data
    train = extract_all(manifest.split("train"), cfg.sampler)
    test = extract_all(manifest.split("test"), cfg.sampler)
    stage1, h1 = train_stage1(train, cfg)
    cora, h2 = train_stage2(train, stage1, cfg)
    return {"cfg": cfg, "manifest": manifest, "train": train, "test": test,
            "stage1": stage1, "h1": h1, "cora": cora, "h2": h2}
