"""On-disk formats: camera network JSON, ellipse CSV, sphere JSON, ASCII PLY.

The camera file must carry an explicit ``convention`` header stating the
world-to-camera transform direction; refusing to guess is the cheapest
defense against the classic pose-inversion bug when importing poses from
external reconstruction tools.  All writes are atomic (temp file + rename)
and all payloads are deterministic: no timestamps, keys in fixed order,
floats serialized with shortest round-trip precision.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .gate import GateReport
from .netselect import ImageNetwork, TiePoint
from .projection import CameraView, EllipseObservation, Sphere
from .reconstruct import SphereModel

#: Mandatory pose convention header of the camera network file.
CONVENTION = "x_cam = rot * x_world + t"

ELLIPSE_BASE_COLUMNS = ["image_id", "ellipse_id", "x_ce", "y_ce", "a_e", "b_e", "theta_rad"]
#: Upper triangle of the 4x4 covariance in (a_e, b_e, x_ce, y_ce) order.
ELLIPSE_COV_COLUMNS = ["cov_aa", "cov_ab", "cov_ax", "cov_ay", "cov_bb",
                       "cov_bx", "cov_by", "cov_xx", "cov_xy", "cov_yy"]

_COV_INDEX = [(0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3),
              (2, 2), (2, 3), (3, 3)]


class FileFormatError(ValueError):
    """A file does not conform to one of the documented formats."""


def atomic_write_text(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- cameras

def load_network(path: str) -> ImageNetwork:
    """Parse a camera network file; validates the convention header and all
    view invariants (orthonormal rotation, positive focal length, PSD
    covariance)."""
    try:
        with open(path) as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict) or "views" not in data:
        raise FileFormatError(f"{path}: expected an object with a 'views' list")
    if data.get("convention") != CONVENTION:
        raise FileFormatError(
            f"{path}: missing or wrong 'convention' header; expected "
            f"{CONVENTION!r} (got {data.get('convention')!r})")
    views = []
    for entry in data["views"]:
        try:
            iop_cov = entry.get("iop_cov")
            views.append(CameraView(
                image_id=str(entry["image_id"]),
                f=float(entry["f"]), px=float(entry["px"]), py=float(entry["py"]),
                rot=np.asarray(entry["rot"], dtype=float).reshape(3, 3),
                t=np.asarray(entry["t"], dtype=float).reshape(3),
                iop_cov=None if iop_cov is None
                else np.asarray(iop_cov, dtype=float).reshape(3, 3)))
        except (KeyError, TypeError, ValueError) as exc:
            raise FileFormatError(f"{path}: bad view entry ({exc})") from exc
    tie_points = []
    for entry in data.get("tie_points", []):
        try:
            tie_points.append(TiePoint(
                xyz=np.asarray(entry["xyz"], dtype=float).reshape(3),
                visible_in=frozenset(str(i) for i in entry["visible_in"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise FileFormatError(f"{path}: bad tie point entry ({exc})") from exc
    try:
        return ImageNetwork(views=views, tie_points=tie_points)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def save_network(network: ImageNetwork, path: str) -> None:
    payload = {
        "convention": CONVENTION,
        "views": [
            {
                "image_id": v.image_id,
                "f": v.f, "px": v.px, "py": v.py,
                "rot": [float(x) for x in v.rot.ravel()],
                "t": [float(x) for x in v.t],
                **({"iop_cov": [float(x) for x in v.iop_cov.ravel()]}
                   if v.iop_cov is not None else {}),
            }
            for v in network.views
        ],
    }
    if network.tie_points:
        payload["tie_points"] = [
            {"xyz": [float(x) for x in tp.xyz],
             "visible_in": sorted(tp.visible_in)}
            for tp in network.tie_points
        ]
    atomic_write_text(path, _dump_json(payload))


# ---------------------------------------------------------------- ellipses

def _cov_to_columns(cov: Optional[np.ndarray]) -> list[str]:
    if cov is None:
        return [""] * len(_COV_INDEX)
    return [repr(float(cov[i, j])) for i, j in _COV_INDEX]


def _cov_from_columns(row: dict) -> Optional[np.ndarray]:
    raw = [row.get(c, "") for c in ELLIPSE_COV_COLUMNS]
    if all(v in ("", None) for v in raw):
        return None
    if any(v in ("", None) for v in raw):
        raise FileFormatError("partial covariance row: give all 10 columns or none")
    cov = np.zeros((4, 4))
    for value, (i, j) in zip(raw, _COV_INDEX):
        cov[i, j] = cov[j, i] = float(value)
    return cov


def load_ellipses(path: str) -> list[EllipseObservation]:
    """Parse an ellipse CSV (mandatory header, optional covariance columns)."""
    out = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise FileFormatError(f"{path}: empty file (header row is mandatory)")
        missing = [c for c in ELLIPSE_BASE_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise FileFormatError(f"{path}: missing columns {missing}")
        for line, row in enumerate(reader, start=2):
            try:
                out.append(EllipseObservation(
                    image_id=row["image_id"], ellipse_id=row["ellipse_id"],
                    x_ce=float(row["x_ce"]), y_ce=float(row["y_ce"]),
                    a_e=float(row["a_e"]), b_e=float(row["b_e"]),
                    theta=float(row["theta_rad"]),
                    cov=_cov_from_columns(row)))
            except (KeyError, TypeError, ValueError) as exc:
                raise FileFormatError(f"{path}:{line}: {exc}") from exc
    return out


def save_ellipses(ellipses: Sequence[EllipseObservation], path: str) -> None:
    lines = [",".join(ELLIPSE_BASE_COLUMNS + ELLIPSE_COV_COLUMNS)]
    for e in ellipses:
        fields = [e.image_id, e.ellipse_id, repr(e.x_ce), repr(e.y_ce),
                  repr(e.a_e), repr(e.b_e), repr(e.theta)]
        lines.append(",".join(fields + _cov_to_columns(e.cov)))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------- spheres

@dataclass
class GateRecord:
    """Gate verdict attached to one contributing ellipse."""

    image_id: str
    ellipse_id: str
    report: GateReport


@dataclass
class SphereEntry:
    """One reconstructed sphere as stored in the sphere output file."""

    sphere_id: str
    model: SphereModel
    ellipses: list[tuple[str, str]]  # (image_id, ellipse_id)
    gate_records: list[GateRecord]


def save_spheres(entries: Sequence[SphereEntry], path: str) -> None:
    payload = {"spheres": []}
    for entry in entries:
        model = entry.model
        payload["spheres"].append({
            "sphere_id": entry.sphere_id,
            "center": [float(x) for x in model.sphere.center],
            "radius": model.sphere.radius,
            "per_view_radii": [[i, r] for i, r in model.per_view_radii],
            "radius_spread": model.radius_spread,
            "triangulation_residual_px": model.triangulation_residual,
            "ellipses": [{"image_id": i, "ellipse_id": e} for i, e in entry.ellipses],
            "gate_reports": [
                {"image_id": g.image_id, "ellipse_id": g.ellipse_id,
                 "tau": g.report.tau, "sigma_tau": g.report.sigma_tau,
                 "k": g.report.k, "accepted": g.report.accepted}
                for g in entry.gate_records],
            "scale_applied": model.scale_applied,
        })
    atomic_write_text(path, _dump_json(payload))


def load_spheres(path: str) -> list[SphereEntry]:
    try:
        with open(path) as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict) or "spheres" not in data:
        raise FileFormatError(f"{path}: expected an object with a 'spheres' list")
    entries = []
    for item in data["spheres"]:
        try:
            model = SphereModel(
                sphere=Sphere(np.asarray(item["center"], dtype=float),
                              float(item["radius"]), frame="world"),
                per_view_radii=[(str(i), float(r)) for i, r in item["per_view_radii"]],
                radius_spread=float(item["radius_spread"]),
                triangulation_residual=float(item["triangulation_residual_px"]),
                scale_applied=(None if item.get("scale_applied") is None
                               else float(item["scale_applied"])))
            gate_records = [
                GateRecord(image_id=str(g["image_id"]), ellipse_id=str(g["ellipse_id"]),
                           report=GateReport(tau=float(g["tau"]),
                                             sigma_tau=float(g["sigma_tau"]),
                                             k=float(g["k"]),
                                             accepted=bool(g["accepted"])))
                for g in item.get("gate_reports", [])]
            entries.append(SphereEntry(
                sphere_id=str(item["sphere_id"]), model=model,
                ellipses=[(str(e["image_id"]), str(e["ellipse_id"]))
                          for e in item["ellipses"]],
                gate_records=gate_records))
        except (KeyError, TypeError, ValueError) as exc:
            raise FileFormatError(f"{path}: bad sphere entry ({exc})") from exc
    return entries


# ---------------------------------------------------------------- PLY

@dataclass
class PlyCloud:
    """An ASCII PLY vertex cloud; non-coordinate properties pass through."""

    properties: list[tuple[str, str]]  # (type, name), header order
    rows: list[list[str]]              # raw tokens, one list per vertex
    comments: list[str]

    @property
    def xyz_indices(self) -> tuple[int, int, int]:
        names = [name for _, name in self.properties]
        try:
            return names.index("x"), names.index("y"), names.index("z")
        except ValueError as exc:
            raise FileFormatError("PLY is missing x/y/z vertex properties") from exc


def load_ply(path: str) -> PlyCloud:
    with open(path) as handle:
        lines = [line.rstrip("\n") for line in handle]
    if not lines or lines[0].strip() != "ply":
        raise FileFormatError(f"{path}: not a PLY file")
    comments = []
    properties: list[tuple[str, str]] = []
    n_vertices = None
    idx = 1
    saw_format = False
    in_vertex_element = False
    while idx < len(lines):
        tokens = lines[idx].split()
        idx += 1
        if not tokens:
            continue
        if tokens[0] == "format":
            if tokens[1:2] != ["ascii"]:
                raise FileFormatError(f"{path}: only ascii PLY is supported")
            saw_format = True
        elif tokens[0] == "comment":
            comments.append(" ".join(tokens[1:]))
        elif tokens[0] == "element":
            if tokens[1] == "vertex":
                n_vertices = int(tokens[2])
                in_vertex_element = True
            else:
                raise FileFormatError(
                    f"{path}: unsupported element {tokens[1]!r} (vertex clouds only)")
        elif tokens[0] == "property":
            if not in_vertex_element:
                raise FileFormatError(f"{path}: property outside vertex element")
            if tokens[1] == "list":
                raise FileFormatError(f"{path}: list properties are not supported")
            properties.append((tokens[1], tokens[2]))
        elif tokens[0] == "end_header":
            break
        else:
            raise FileFormatError(f"{path}: unexpected header line {lines[idx - 1]!r}")
    else:
        raise FileFormatError(f"{path}: missing end_header")
    if not saw_format or n_vertices is None:
        raise FileFormatError(f"{path}: incomplete PLY header")
    body = [line.split() for line in lines[idx:] if line.strip()]
    if len(body) != n_vertices:
        raise FileFormatError(
            f"{path}: header declares {n_vertices} vertices, found {len(body)}")
    for line_no, row in enumerate(body):
        if len(row) != len(properties):
            raise FileFormatError(
                f"{path}: vertex row {line_no} has {len(row)} values, "
                f"expected {len(properties)}")
    return PlyCloud(properties=properties, rows=body, comments=comments)


def save_ply(cloud: PlyCloud, path: str) -> None:
    header = ["ply", "format ascii 1.0"]
    header += [f"comment {c}" for c in cloud.comments]
    header.append(f"element vertex {len(cloud.rows)}")
    header += [f"property {ptype} {name}" for ptype, name in cloud.properties]
    header.append("end_header")
    body = [" ".join(row) for row in cloud.rows]
    atomic_write_text(path, "\n".join(header + body) + "\n")


def scale_ply(cloud: PlyCloud, s_r: float) -> PlyCloud:
    """Scaled copy: x/y/z multiplied by ``s_r``, other columns untouched."""
    ix, iy, iz = cloud.xyz_indices
    rows = []
    for row in cloud.rows:
        row = list(row)
        for i in (ix, iy, iz):
            row[i] = repr(float(row[i]) * s_r)
        rows.append(row)
    return PlyCloud(properties=list(cloud.properties), rows=rows,
                    comments=list(cloud.comments))
