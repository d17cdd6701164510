"""ASCII PLY point clouds and dataset manifests."""

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ManifestError, ParseError

PLY_PROPERTIES = (
    ("float", "x"), ("float", "y"), ("float", "z"),
    ("uchar", "red"), ("uchar", "green"), ("uchar", "blue"),
)
SPLITS = ("train", "test")


@dataclass
class PointCloud:
    """N points with float positions and 0-255 integer colors."""

    positions: np.ndarray
    colors: np.ndarray
    name: str = "cloud"

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.int64).reshape(-1, 3)
        if len(self.positions) != len(self.colors):
            raise DomainError("positions and colors differ in length")
        if len(self.positions) < 1:
            raise DomainError("a point cloud needs at least one point")
        if not np.isfinite(self.positions).all():
            raise DomainError("non-finite coordinates")
        if self.colors.min() < 0 or self.colors.max() > 255:
            raise DomainError("colors must lie in 0..255")

    def __len__(self):
        return len(self.positions)

    def as_matrix(self):
        """The N x 6 real matrix (x, y, z, r, g, b)."""
        return np.hstack([self.positions, self.colors.astype(np.float64)])


def parse_ply(data, name="cloud"):
    if isinstance(data, bytes):
        try:
            data = data.decode("ascii")
        except UnicodeDecodeError as exc:
            raise ParseError("file is not ASCII") from exc
    lines = data.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    def line(i):
        if i >= len(lines):
            raise ParseError("unexpected end of header", i + 1)
        return lines[i].rstrip("\r")

    if line(0).strip() != "ply":
        raise ParseError("missing 'ply' magic line", 1)
    if line(1).split() != ["format", "ascii", "1.0"]:
        raise ParseError("expected 'format ascii 1.0'", 2)
    i = 2
    while line(i).startswith("comment"):
        i += 1
    tokens = line(i).split()
    if len(tokens) != 3 or tokens[:2] != ["element", "vertex"] or not tokens[2].isdigit():
        raise ParseError("expected 'element vertex N'", i + 1)
    n = int(tokens[2])
    i += 1
    for kind, prop in PLY_PROPERTIES:
        if line(i).split() != ["property", kind, prop]:
            raise ParseError(f"expected 'property {kind} {prop}'", i + 1)
        i += 1
    if line(i).strip() != "end_header":
        raise ParseError("expected 'end_header'", i + 1)
    i += 1

    body = lines[i:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != n:
        at = i + min(len(body), n) + 1
        raise ParseError(f"header declares {n} vertices, data section has {len(body)}", at)
    if n == 0:
        raise ParseError("a point cloud needs at least one vertex", i)
    positions = np.empty((n, 3))
    colors = np.empty((n, 3), dtype=np.int64)
    for j, row in enumerate(body):
        lineno = i + j + 1
        tok = row.split()
        if len(tok) != 6:
            raise ParseError(f"expected 6 values, got {len(tok)}", lineno)
        try:
            xyz = [float(t) for t in tok[:3]]
            rgb = [int(t) for t in tok[3:]]
        except ValueError:
            raise ParseError(f"non-numeric token in {row!r}", lineno) from None
        if not all(math.isfinite(v) for v in xyz):
            raise ParseError("non-finite coordinate", lineno)
        if any(c < 0 or c > 255 for c in rgb):
            raise ParseError(f"color out of range in {row!r}", lineno)
        positions[j] = xyz
        colors[j] = rgb
    return PointCloud(positions, colors, name)


def write_ply(cloud):
    out = io.StringIO()
    out.write("ply\nformat ascii 1.0\n")
    out.write(f"element vertex {len(cloud)}\n")
    for kind, prop in PLY_PROPERTIES:
        out.write(f"property {kind} {prop}\n")
    out.write("end_header\n")
    for (x, y, z), (r, g, b) in zip(cloud.positions.tolist(), cloud.colors.tolist()):
        out.write(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}\n")
    return out.getvalue().encode("ascii")


def read_ply(path):
    path = Path(path)
    return parse_ply(path.read_bytes(), name=path.stem)


def save_ply(cloud, path):
    Path(path).write_bytes(write_ply(cloud))


@dataclass
class ManifestEntry:
    file: Path
    mos: float
    split: str

    @property
    def name(self):
        return self.file.stem


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    root: Path = Path(".")

    def split(self, tag):
        return [e for e in self.entries if e.split == tag]

    def __len__(self):
        return len(self.entries)


def load_manifest(path, mos_range=(0.0, 100.0)):
    path = Path(path)
    root = path.parent
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["file", "mos", "split"]:
            raise ManifestError("header must be 'file,mos,split'", 1)
        entries, seen = [], set()
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ManifestError(f"expected 3 fields, got {len(row)}", row_no)
            file, mos_text, split = (c.strip() for c in row)
            if file in seen:
                raise ManifestError(f"duplicate file {file!r}", row_no)
            seen.add(file)
            try:
                mos = float(mos_text)
            except ValueError:
                raise ManifestError(f"unparsable mos {mos_text!r}", row_no) from None
            if not (math.isfinite(mos) and mos_range[0] <= mos <= mos_range[1]):
                raise ManifestError(f"mos {mos} outside {mos_range}", row_no)
            if split not in SPLITS:
                raise ManifestError(f"unknown split {split!r}", row_no)
            entries.append(ManifestEntry(root / file, mos, split))
    return DatasetManifest(entries, root)


def write_manifest(manifest, path):
    path = Path(path)
    lines = ["file,mos,split"]
    for e in manifest.entries:
        try:
            rel = Path(e.file).relative_to(path.parent)
        except ValueError:
            rel = Path(e.file)
        lines.append(f"{rel.as_posix()},{e.mos!r},{e.split}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
