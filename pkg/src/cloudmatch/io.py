"""ASCII PLY reading and writing, plus the small text formats used by the CLI."""

import csv
import io
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .exceptions import PlyParseError
from .geometry import PointCloud

FLOAT_TYPES = {"float", "float32", "double", "float64"}
SCALAR_TYPES = FLOAT_TYPES | {"char", "uchar", "short", "ushort", "int", "uint",
                              "int8", "uint8", "int16", "uint16", "int32", "uint32"}
COORDS = ("x", "y", "z")
NORMALS = ("nx", "ny", "nz")


def _parse_header(lines, path):
    if not lines or lines[0].strip() != "ply":
        raise PlyParseError("missing 'ply' magic", line=1, path=path)
    elements = []
    fmt = None
    for lineno, raw in enumerate(lines[1:], start=2):
        words = raw.split()
        if not words or words[0] in ("comment", "obj_info"):
            continue
        key = words[0]
        if key == "format":
            if len(words) != 3:
                raise PlyParseError("malformed format line", lineno, path)
            fmt = words[1]
            if fmt != "ascii":
                raise PlyParseError(f"unsupported PLY format {fmt!r}; only ascii is read", lineno, path)
            if words[2] != "1.0":
                raise PlyParseError(f"unsupported PLY version {words[2]!r}", lineno, path)
        elif key == "element":
            if len(words) != 3:
                raise PlyParseError("malformed element line", lineno, path)
            try:
                count = int(words[2])
            except ValueError:
                raise PlyParseError(f"invalid element count {words[2]!r}", lineno, path) from None
            if count < 0:
                raise PlyParseError("negative element count", lineno, path)
            elements.append({"name": words[1], "count": count, "props": [], "line": lineno})
        elif key == "property":
            if not elements:
                raise PlyParseError("property before any element", lineno, path)
            if len(words) == 5 and words[1] == "list":
                elements[-1]["props"].append(("list", words[4]))
            elif len(words) == 3 and words[1] in SCALAR_TYPES:
                elements[-1]["props"].append((words[1], words[2]))
            else:
                raise PlyParseError(f"malformed property line {raw.strip()!r}", lineno, path)
        elif key == "end_header":
            if fmt is None:
                raise PlyParseError("missing format line", lineno, path)
            return elements, lineno
        else:
            raise PlyParseError(f"unexpected header keyword {key!r}", lineno, path)
    raise PlyParseError("missing end_header", len(lines), path)


def read_cloud(path):
    """Read the ``vertex`` element of an ASCII PLY 1.0 file.

    ``x y z`` must be float properties; ``nx ny nz`` are optional and are
    re-normalised. If any normal has zero length the cloud is returned
    without normals. Other properties and elements are skipped.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except UnicodeDecodeError:
        raise PlyParseError("file is not ASCII text", path=path) from None
    lines = text.splitlines()
    elements, header_end = _parse_header(lines, path)

    vertex = next((e for e in elements if e["name"] == "vertex"), None)
    if vertex is None:
        raise PlyParseError("no vertex element", path=path)
    if vertex["count"] == 0:
        raise PlyParseError("vertex element has zero vertices", vertex["line"], path)
    names = [name for _, name in vertex["props"]]
    types = dict((name, kind) for kind, name in vertex["props"])
    for name in COORDS:
        if name not in types:
            raise PlyParseError(f"vertex property {name!r} missing", vertex["line"], path)
        if types[name] not in FLOAT_TYPES:
            raise PlyParseError(f"vertex property {name!r} has non-float type {types[name]!r}",
                                vertex["line"], path)
    if any(kind == "list" for kind, _ in vertex["props"]):
        raise PlyParseError("list properties on vertices are not supported", vertex["line"], path)
    has_normals = all(n in types for n in NORMALS)
    cols = [names.index(n) for n in COORDS + (NORMALS if has_normals else ())]

    cursor = header_end
    data = None
    for element in elements:
        if element is not vertex:
            cursor += element["count"]
            continue
        rows = []
        for offset in range(element["count"]):
            lineno = cursor + offset + 1
            if lineno > len(lines):
                raise PlyParseError(f"expected {element['count']} vertices, file ended", lineno, path)
            words = lines[lineno - 1].split()
            if len(words) != len(names):
                raise PlyParseError(f"expected {len(names)} values, got {len(words)}", lineno, path)
            try:
                rows.append([float(words[c]) for c in cols])
            except ValueError:
                raise PlyParseError("non-numeric vertex value", lineno, path) from None
        data = np.array(rows, dtype=np.float64)
        cursor += element["count"]
    if not np.all(np.isfinite(data)):
        raise PlyParseError("non-finite vertex value", path=path)

    normals = None
    if has_normals:
        normals = data[:, 3:]
        norms = np.linalg.norm(normals, axis=1)
        if np.all(norms > 0):
            normals = normals / norms[:, None]
        else:
            normals = None
    return PointCloud(data[:, :3], normals)


def format_cloud(cloud):
    """ASCII PLY text for ``cloud`` with 9 significant digits per value."""
    out = io.StringIO()
    out.write("ply\nformat ascii 1.0\n")
    out.write(f"element vertex {len(cloud)}\n")
    names = COORDS + (NORMALS if cloud.has_normals else ())
    for name in names:
        out.write(f"property double {name}\n")
    out.write("end_header\n")
    data = cloud.points if not cloud.has_normals else np.hstack([cloud.points, cloud.normals])
    np.savetxt(out, data, fmt="%.9g", delimiter=" ", newline="\n")
    return out.getvalue()


def write_cloud(cloud, path):
    path = Path(path)
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(format_cloud(cloud))
    except OSError as exc:
        raise OSError(f"cannot write cloud to {path}: {exc.strerror or exc}") from exc


def transform_to_dict(transform, per_iteration_error=None, seed=None):
    data = {
        "scale": transform.scale,
        "rotation": [float(v) for v in transform.rotation.reshape(-1)],
        "translation": [float(v) for v in transform.translation],
    }
    if per_iteration_error is not None:
        data["per_iteration_error"] = [float(v) for v in per_iteration_error]
    if seed is not None:
        data["seed"] = int(seed)
    return data


def write_transform(path, transform, per_iteration_error=None, seed=None):
    """Write a transform as JSON with keys in a fixed order.

    ``rotation`` is stored row-major as nine numbers.
    """
    text = json.dumps(transform_to_dict(transform, per_iteration_error, seed), indent=2)
    Path(path).write_text(text + "\n", encoding="ascii", newline="\n")


def read_transform(path):
    from .geometry import SimilarityTransform

    data = json.loads(Path(path).read_text(encoding="ascii"))
    return SimilarityTransform.from_parts(
        data["scale"], np.reshape(data["rotation"], (3, 3)), data["translation"])


def write_csv(path, header, rows):
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_truth(path):
    """Map probe id to identity from a ``probe_id,identity`` CSV."""
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"probe_id", "identity"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: truth CSV needs a 'probe_id,identity' header")
        truth = {}
        for row in reader:
            if row["probe_id"] in truth:
                raise ValueError(f"{path}: duplicate probe_id {row['probe_id']!r}")
            truth[row["probe_id"]] = row["identity"]
    return truth


@dataclass
class RunConfig:
    """Everything besides the input files that determines a CLI run."""

    sample_size: int = 500
    iterations: int = 15
    outlier_k: float = 4.0
    k: float = 4.0
    seed: int = 0
    symmetric: bool = False
    inputs: dict = None
    output: str = None
    sweep: tuple = None

    def to_json(self):
        data = asdict(self)
        if data["sweep"] is not None:
            data["sweep"] = list(data["sweep"])
        return json.dumps(data, indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown RunConfig keys: {unknown}")
        if data.get("sweep") is not None:
            data["sweep"] = tuple(data["sweep"])
        return cls(**data)

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="ascii", newline="\n")

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text(encoding="ascii"))
