"""Two-stage training: patch quality regression, then correlation classification.

Patches are extracted once per cloud and reused every epoch.  A patch cache
directory holds ``cache.json`` plus one checkpoint-format file per cloud::

    cache.json          {"version": 1, "sampler": {...}, "clouds": [{"name", "file", "mos", "split"}]}
                        (``file`` is relative to the cache directory)
    <cloud>.patches     arrays "texture" (C, R_t, 6), "structure" (C, R_s, 6), "centers" (C,)
"""

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .arkp import PatchQualityModel
from .autodiff import SGD, checkpoint, cross_entropy, mse_loss, reshape
from .config import Config, SamplerConfig
from .cora import CoraNet, build_correlation_labels
from .errors import ConfigError, DomainError
from .geometry import extract_patches, keyed_rng, sample_structure_input, sample_texture_input
from .io import read_ply

log = logging.getLogger(__name__)

CACHE_VERSION = 1


def num_workers():
    env = os.environ.get("PATCHQA_NUM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def parallel_map(fn, items):
    """Ordered map that uses up to ``PATCHQA_NUM_THREADS`` threads."""
    items = list(items)
    workers = min(num_workers(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class CloudPatches:
    name: str
    mos: float
    split: str
    texture: np.ndarray
    structure: np.ndarray
    centers: np.ndarray
    file: str = ""


def prepare_cloud(cloud, sampler):
    """Patches of one cloud reduced to the two network inputs."""
    patches = extract_patches(cloud, sampler)
    tex = np.stack([sample_texture_input(p, sampler.R_t) for p in patches])
    struct = np.stack([sample_structure_input(p, sampler.R_s, sampler.seed) for p in patches])
    return tex, struct, np.array([p.center_index for p in patches], dtype=np.float64)


def extract_entry(entry, sampler):
    try:
        cloud = read_ply(entry.file)
    except OSError as exc:
        raise DomainError(f"cannot read {entry.file}: {exc}") from exc
    tex, struct, centers = prepare_cloud(cloud, sampler)
    return CloudPatches(cloud.name, entry.mos, entry.split, tex, struct, centers, str(entry.file))


def extract_all(entries, sampler):
    sampler.validate()
    return parallel_map(lambda e: extract_entry(e, sampler), entries)


def save_patch_cache(clouds, sampler, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {"version": CACHE_VERSION, "sampler": asdict(sampler), "clouds": []}
    for c in clouds:
        checkpoint.save(directory / f"{c.name}.patches",
                        {"texture": c.texture, "structure": c.structure, "centers": c.centers},
                        {"name": c.name, "mos": c.mos, "split": c.split})
        # relative source paths keep the index independent of where the run lives
        source = Path(os.path.relpath(c.file, directory)).as_posix() if c.file else ""
        index["clouds"].append({"name": c.name, "file": source, "mos": c.mos, "split": c.split})
    (directory / "cache.json").write_text(json.dumps(index, indent=1, sort_keys=True) + "\n")


def load_patch_cache(directory, sampler=None):
    directory = Path(directory)
    index = json.loads((directory / "cache.json").read_text())
    if index.get("version") != CACHE_VERSION:
        raise ConfigError(f"patch cache version {index.get('version')} != {CACHE_VERSION}")
    cached = SamplerConfig(**index["sampler"])
    if sampler is not None and cached != sampler:
        raise ConfigError(f"patch cache was built with {cached}, config asks for {sampler}")
    clouds = []
    for c in index["clouds"]:
        arrays, _ = checkpoint.load(directory / f"{c['name']}.patches")
        source = str(directory / c["file"]) if c["file"] else ""
        clouds.append(CloudPatches(c["name"], c["mos"], c["split"], arrays["texture"],
                                   arrays["structure"], arrays["centers"], source))
    return clouds


def patch_seeds(seed, tag, name, C):
    """One R-sampling seed per patch of cloud ``name``."""
    rng = keyed_rng(seed, tag, name)
    return [int(s) for s in rng.integers(0, 2**63, size=C)]


def _batches(n, size, rng):
    order = rng.permutation(n) if rng is not None else np.arange(n)
    chunks = [order[i:i + size] for i in range(0, n, size)]
    # batch norm needs two rows; fold a trailing singleton into its neighbour
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        tail = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], tail])
    return chunks


@dataclass
class History:
    losses: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def _stop_early(losses, patience, threshold):
    if patience <= 0 or len(losses) <= patience:
        return False
    best_before = min(losses[:-patience])
    recent = min(losses[-patience:])
    return recent > best_before * (1 - threshold)


def train_stage1(clouds, cfg):
    """Fit both feature branches and the quality head to the cloud scores.

    Every patch inherits its cloud's score as target.
    """
    cfg.validate()
    if not clouds:
        raise DomainError("stage 1 needs at least one training cloud")
    tr = cfg.train
    tex = np.concatenate([c.texture for c in clouds])
    struct = np.concatenate([c.structure for c in clouds])
    C = len(clouds[0].texture)
    targets = np.repeat([c.mos for c in clouds], C)
    names = [(c.name, i) for c in clouds for i in range(C)]

    model = PatchQualityModel(cfg.sampler.R_t, cfg.sampler.R_s, cfg.arkp, seed=tr.seed)
    model.head.fc2.bias.data[:] = targets.mean()
    steps = len(_batches(len(targets), tr.stage1_batch, None))
    opt = SGD(model.parameters(), tr.base_lr, tr.epochs1 * steps, tr.momentum)
    shuffle = keyed_rng(tr.seed, "stage1", "shuffle")
    history = History()
    model.train()
    for epoch in range(tr.epochs1):
        seeds = {}
        for c in clouds:
            for i, s in enumerate(patch_seeds(tr.seed, f"epoch{epoch}", c.name, C)):
                seeds[(c.name, i)] = s
        total = 0.0
        for batch in _batches(len(targets), tr.stage1_batch, shuffle):
            _, q = model(tex[batch], struct[batch], [seeds[names[j]] for j in batch])
            loss = mse_loss(q, targets[batch])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(batch)
        history.losses.append(total / len(targets))
        log.info("stage1 epoch %d loss %.4f lr %.3g", epoch + 1, history.losses[-1], opt.state.lr)
        if _stop_early(history.losses, tr.patience, tr.min_rel_improvement):
            break
    model.eval()
    return model, history


def stage1_outputs(model, clouds, seed, batch=64):
    """Eval-mode patch features (n, C, D) and patch scores (n, C)."""
    model.eval()
    C = len(clouds[0].texture)
    tex = np.concatenate([c.texture for c in clouds])
    struct = np.concatenate([c.structure for c in clouds])
    seeds = [s for c in clouds for s in patch_seeds(seed, "eval", c.name, C)]
    feats, scores = [], []
    for start in range(0, len(seeds), batch):
        sl = slice(start, start + batch)
        f, q = model(tex[sl], struct[sl], seeds[sl])
        feats.append(f.data)
        scores.append(q.data)
    f = np.concatenate(feats)
    return f.reshape(len(clouds), C, -1), np.concatenate(scores).reshape(len(clouds), C)


def train_stage2(clouds, stage1, cfg):
    """Train the correlation network on labels from the frozen stage-1 model."""
    cfg.validate()
    if not clouds:
        raise DomainError("stage 2 needs at least one training cloud")
    tr = cfg.train
    C = len(clouds[0].texture)
    if C != cfg.sampler.C:
        raise ConfigError(f"patches have C={C} but the config asks for C={cfg.sampler.C}")
    feats, scores = stage1_outputs(stage1, clouds, tr.seed)
    labels = np.stack([build_correlation_labels(q, c.mos) for q, c in zip(scores, clouds)])

    cora = CoraNet(feats.shape[-1], cfg.cora, seed=tr.seed)
    steps = len(_batches(len(clouds), tr.stage2_batch, None))
    opt = SGD(cora.parameters(), tr.base_lr, tr.epochs2 * steps, tr.momentum)
    shuffle = keyed_rng(tr.seed, "stage2", "shuffle")
    history = History()
    cora.train()
    for epoch in range(tr.epochs2):
        total = 0.0
        for batch in _batches(len(clouds), tr.stage2_batch, shuffle):
            logits = cora(feats[batch])
            loss = cross_entropy(reshape(logits, (-1, 3)), labels[batch].ravel())
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(batch)
        history.losses.append(total / len(clouds))
        log.info("stage2 epoch %d loss %.4f", epoch + 1, history.losses[-1])
        if _stop_early(history.losses, tr.patience, tr.min_rel_improvement):
            break
    cora.eval()
    predicted = np.argmax(cora(feats).data, axis=-1)
    history.extra["train_accuracy"] = float(np.mean(predicted == labels))
    history.extra["label_counts"] = np.bincount(labels.ravel(), minlength=3).tolist()
    return cora, history


def save_stage1(path, model, cfg, history=None):
    meta = {"kind": "stage1", "config": cfg.flat(),
            "losses": history.losses if history else []}
    checkpoint.save(path, model.state_dict(), meta)


def load_stage1(path):
    arrays, meta = checkpoint.load(path)
    if meta.get("kind") != "stage1":
        raise ConfigError(f"{path} is not a stage-1 checkpoint")
    cfg = Config.from_flat(meta["config"]).validate()
    model = PatchQualityModel(cfg.sampler.R_t, cfg.sampler.R_s, cfg.arkp, seed=cfg.train.seed)
    model.load_state_dict(arrays)
    model.eval()
    return model, cfg, meta


def save_stage2(path, cora, cfg, history=None):
    meta = {"kind": "cora", "config": cfg.flat(), "d_in": cora.d_in,
            "losses": history.losses if history else [],
            "extra": history.extra if history else {}}
    checkpoint.save(path, cora.state_dict(), meta)


def load_stage2(path):
    arrays, meta = checkpoint.load(path)
    if meta.get("kind") != "cora":
        raise ConfigError(f"{path} is not a CORA checkpoint")
    cfg = Config.from_flat(meta["config"]).validate()
    cora = CoraNet(meta["d_in"], cfg.cora, seed=cfg.train.seed)
    cora.load_state_dict(arrays)
    cora.eval()
    return cora, cfg, meta


def steps_per_epoch(n, batch):
    return max(1, math.ceil(n / batch))
