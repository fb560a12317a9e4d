"""Field containers, JSON reports and CSV samples.

A field container is a pair of files: ``<stem>.bin`` holding a small
header followed by the full-spectrum Fourier coefficients as interleaved
little-endian float64 (real, imag), and ``<stem>.json`` describing the
grids.  Coefficients use the unit normalization of
:meth:`HGrid.coefficients`.
"""

import csv
import json
from pathlib import Path

import numpy as np

from .spectral import HGrid, VGrid

MAGIC = b"GDNOFLD1"


def _stem(path):
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".bin", ".json") else p


def save_field(path, values, hgrid, vgrid=None, name="", meta=None):
    """Write ``values`` (real, ``(..., Nx, Ny)``) as a binary container plus sidecar."""
    values = np.asarray(values, dtype=float)
    if values.shape[-2:] != hgrid.shape:
        raise ValueError(f"field shape {values.shape} does not match {hgrid!r}")
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    coef = hgrid.coefficients(values)
    inter = np.empty(coef.shape + (2,), dtype="<f8")
    inter[..., 0] = coef.real
    inter[..., 1] = coef.imag
    dims = np.asarray(values.shape, dtype="<i8")
    with open(stem.with_suffix(".bin"), "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.asarray([len(dims)], dtype="<u4").tobytes())
        fh.write(dims.tobytes())
        fh.write(inter.tobytes())
    side = {
        "name": name,
        "shape": list(values.shape),
        "Nx": hgrid.Nx, "Ny": hgrid.Ny, "Lx": hgrid.Lx, "Ly": hgrid.Ly,
        "layout": "full-spectrum coefficients, interleaved complex, little-endian float64",
    }
    if vgrid is not None:
        side.update({"Nw": vgrid.Nw, "h": vgrid.h})
    if meta:
        side["meta"] = meta
    write_json(stem.with_suffix(".json"), side)
    return stem


def load_field(path):
    """Read a container; returns ``(values, hgrid, vgrid, sidecar)``."""
    stem = _stem(path)
    side = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
    raw = stem.with_suffix(".bin").read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError("not a field container")
    nd = int(np.frombuffer(raw, dtype="<u4", count=1, offset=8)[0])
    dims = tuple(np.frombuffer(raw, dtype="<i8", count=nd, offset=12))
    data = np.frombuffer(raw, dtype="<f8", offset=12 + 8 * nd).reshape(dims + (2,))
    hg = HGrid(side["Nx"], side["Ny"], side["Lx"], side["Ly"])
    vg = VGrid(side["Nw"], side["h"]) if "Nw" in side else None
    values = hg.from_coefficients(data[..., 0] + 1j * data[..., 1])
    return values, hg, vg, side


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, obj):
    """UTF-8 JSON with sorted keys; numpy scalars and arrays become plain values."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_plain(obj), sort_keys=True, indent=2, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def write_csv(path, columns):
    """Write equal-length 1-D columns with a header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    cols = [np.asarray(columns[n]).ravel() for n in names]
    n = {len(c) for c in cols}
    if len(n) > 1:
        raise ValueError("columns differ in length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(names)
        for row in zip(*cols):
            wr.writerow([repr(float(v)) for v in row])
    return path


def field_samples(hgrid, **fields):
    """Columns ``x, y, <name>...`` of physical-space samples for plotting."""
    cols = {"x": hgrid.X.ravel(), "y": hgrid.Y.ravel()}
    for k, v in fields.items():
        cols[k] = np.asarray(v).ravel()
    return cols


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    return {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(head)}


def save_symbol(path, symbol, name=""):
    """Sample every component on the grid's modes; manifest lists the orders.

    The container holds an array of shape ``(n_components, 2, n_modes, Nx, Ny)``
    with real and imaginary tables on the second axis.
    """
    g = symbol.grid
    kx, ky = (k.ravel() for k in g.full_k)
    tabs = []
    for c in symbol.components:
        t = np.broadcast_to(c.fn(kx[:, None, None], ky[:, None, None]), (len(kx),) + g.shape)
        tabs.append(np.stack([np.real(t), np.imag(t)]))
    meta = {"orders": [float(c.order) for c in symbol.components], "symbol": name or symbol.name,
            "mode_order": "full FFT layout, row-major over (kx, ky)"}
    return save_field(path, np.stack(tabs), g, name=name or symbol.name, meta=meta)
