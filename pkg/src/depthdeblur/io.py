"""On-disk formats: 16-bit PNG images, PFM depth and flow, JSON and text side files.

A synthesized instance bundle is a directory holding

    blurry.png  depth.pfm  intrinsics.json  manifest.json
    clean.png  pose_true.txt  flow_true.pfm          (ground truth)

and a deblur run writes

    latent.png  pose.txt  flow.pfm  energy.csv  status.json
"""
from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import cv2
import numpy as np

from .types import DepthMap, FlowField, Intrinsics, InvalidParameter, Pose6, as_image

PNG_MAX = 65535

BLURRY, DEPTH, INTRINSICS, MANIFEST = "blurry.png", "depth.pfm", "intrinsics.json", "manifest.json"
CLEAN, TRUE_POSE, TRUE_FLOW = "clean.png", "pose_true.txt", "flow_true.pfm"
LATENT, POSE, FLOW, ENERGY, STATUS = "latent.png", "pose.txt", "flow.pfm", "energy.csv", "status.json"


class MissingInput(FileNotFoundError):
    pass


def _need(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise MissingInput(f"input not found: {path}")
    return path


# images

def quantize(image) -> np.ndarray:
    """The values an image takes after a PNG round trip."""
    return np.rint(np.clip(np.asarray(image, dtype=np.float64), 0, 1) * PNG_MAX) / PNG_MAX


def write_png16(path, image) -> None:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    q = np.rint(np.clip(img, 0, 1) * PNG_MAX).astype(np.uint16)
    if q.ndim == 3:
        q = q[:, :, ::-1]  # cv2 stores BGR
    if not cv2.imwrite(str(path), np.ascontiguousarray(q)):
        raise OSError(f"could not write {path}")


def read_png16(path) -> np.ndarray:
    """Read an 8- or 16-bit PNG as a float (H, W, C) image in [0, 1]."""
    raw = cv2.imread(str(_need(path)), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InvalidParameter(f"{path} is not a readable image")
    scale = PNG_MAX if raw.dtype == np.uint16 else 255
    img = raw.astype(np.float64) / scale
    if img.ndim == 3:
        img = img[:, :, 2::-1] if img.shape[2] >= 3 else img[:, :, :1]
    return as_image(img)


# PFM

def write_pfm(path, data) -> None:
    """Little-endian PFM (scale -1); one or three channels, rows stored bottom-up."""
    a = np.asarray(data, dtype=np.float32)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim == 2:
        tag = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        tag = b"PF"
    else:
        raise InvalidParameter(f"PFM holds 1 or 3 channels, got shape {a.shape}")
    h, w = a.shape[:2]
    with open(path, "wb") as f:
        f.write(tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        f.write(np.flipud(a).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(_need(path), "rb") as f:
        tag = f.readline().strip()
        if tag not in (b"PF", b"Pf"):
            raise InvalidParameter(f"{path}: not a PFM file")
        dims = f.readline().decode("ascii")
        m = re.match(r"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise InvalidParameter(f"{path}: bad PFM header")
        w, h = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().decode("ascii").strip())
        dtype = "<f4" if scale < 0 else ">f4"
        c = 3 if tag == b"PF" else 1
        buf = np.frombuffer(f.read(), dtype=dtype)
    if buf.size != w * h * c:
        raise InvalidParameter(f"{path}: expected {w * h * c} values, found {buf.size}")
    a = buf.reshape((h, w, c) if c == 3 else (h, w))
    return np.flipud(a).astype(np.float64)


def write_depth(path, depth: DepthMap) -> None:
    """Depth as single-channel PFM; invalid pixels stored as 0."""
    write_pfm(path, np.where(depth.valid, depth.data, 0.0))


def read_depth(path) -> DepthMap:
    try:
        d = read_pfm(path)
    except MissingInput:
        raise MissingInput(f"depth map not found: {path}") from None
    if d.ndim != 2:
        raise InvalidParameter(f"{path}: depth must have one channel")
    return DepthMap(d, d > 0)


def write_flow(path, flow: FlowField) -> None:
    """Flow as three-channel PFM: (u, v, valid)."""
    write_pfm(path, np.dstack([np.where(flow.valid[..., None], flow.data, 0.0), flow.valid]))


def read_flow(path) -> FlowField:
    a = read_pfm(path)
    if a.ndim != 3:
        raise InvalidParameter(f"{path}: flow must have three channels")
    return FlowField(a[:, :, :2].copy(), a[:, :, 2] > 0.5)


# small text files

def write_pose(path, p: Pose6) -> None:
    Path(path).write_text(" ".join(repr(float(x)) for x in p.as_vector()) + "\n")


def read_pose(path) -> Pose6:
    vals = _need(path).read_text().split()
    if len(vals) != 6:
        raise InvalidParameter(f"{path}: expected 6 numbers, found {len(vals)}")
    return Pose6.from_vector([float(v) for v in vals])


def write_intrinsics(path, K: Intrinsics) -> None:
    Path(path).write_text(json.dumps({"fx": K.fx, "fy": K.fy, "cx": K.cx, "cy": K.cy}, indent=2) + "\n")


def read_intrinsics(path) -> Intrinsics:
    try:
        d = json.loads(_need(path).read_text())
        return Intrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidParameter(f"{path}: bad intrinsics ({exc})") from exc


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(_need(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidParameter(f"{path}: {exc}") from exc


def write_energy_csv(path, rows) -> None:
    """Rows of (level, iteration, energy)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["level", "iteration", "energy"])
        for level, it, e in rows:
            w.writerow([int(level), int(it), repr(float(e))])


def read_energy_csv(path) -> list[tuple[int, int, float]]:
    with open(_need(path), newline="") as f:
        r = csv.reader(f)
        next(r)
        return [(int(a), int(b), float(c)) for a, b, c in r]
