"""Line-oriented text format for fitted models.

::

    CHAOSROM v1 <kind>
    dim <name> <rows> <cols> [<depth>]
    <rows lines of cols*depth whitespace-separated values>
    ...

Reals are written with 17 significant digits so that a load of a save is
bit-exact; complex entries are written ``re:im``.  Vectors are stored as a
single row, scalars as ``1 1``.
"""
from __future__ import annotations

import os
import tempfile

import numpy as np

from .dmd import DmdModel
from .errors import ChaosRomError, ModelFormatError
from .neural import NeuralRom
from .nn import MlpParams
from .quadratic import QuadraticModel

MAGIC = "CHAOSROM"
VERSION = "v1"
KINDS = ("dmd", "quad", "ae", "syco")
_NET_PARTS = ("A1", "b1", "A2", "b2")
_NETS = ("encoder", "decoder", "dynamics")

# name -> (ndim, is_complex); ndim 0 is a scalar
_SCHEMA = {
    "dmd": {"Phi": (2, True), "Phi_pinv": (2, True), "Omega": (1, True), "dt": (0, False)},
    "quad": {"x_bar": (1, False), "Phi": (2, False), "Phi_bar": (3, False),
             "a": (1, False), "B": (2, False), "C": (3, False)},
}
_NEURAL = {"constrained": (0, False), "lambda": (0, False), "omega": (0, False),
           "upsilon": (0, False), "substeps": (0, False)}
for _net in _NETS:
    for _part in _NET_PARTS:
        _NEURAL[f"{_net}.{_part}"] = (2 if _part.startswith("A") else 1, False)
_SCHEMA["ae"] = _SCHEMA["syco"] = _NEURAL


def _fmt(v) -> str:
    if isinstance(v, complex) or np.iscomplexobj(v):
        return "%.17g:%.17g" % (v.real, v.imag)
    return "%.17g" % v


def _blocks(model):
    kind = model.kind
    if kind == "dmd":
        return kind, {"Phi": model.Phi, "Phi_pinv": model.Phi_pinv,
                      "Omega": model.Omega, "dt": model.dt}
    if kind == "quad":
        return kind, {k: getattr(model, k) for k in ("x_bar", "Phi", "Phi_bar", "a", "B", "C")}
    if kind in ("ae", "syco"):
        out = {"constrained": 1.0 if model.constrained else 0.0, "lambda": model.lam,
               "omega": model.omega, "upsilon": model.upsilon, "substeps": float(model.substeps)}
        for net_name, net in zip(_NETS, model.networks()):
            for part, arr in zip(_NET_PARTS, net.arrays()):
                out[f"{net_name}.{part}"] = arr
        return kind, out
    raise ModelFormatError(f"cannot save a model of kind {kind!r}")


def dumps_model(model) -> str:
    kind, blocks = _blocks(model)
    lines = [f"{MAGIC} {VERSION} {kind}"]
    for name, value in blocks.items():
        arr = np.asarray(value)
        cplx = np.iscomplexobj(arr)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"dim {name} {dims}")
        for row in arr.reshape(arr.shape[0], -1):
            lines.append(" ".join(_fmt(complex(v) if cplx else float(v)) for v in row))
    return "\n".join(lines) + "\n"


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(model, path) -> None:
    atomic_write_text(path, dumps_model(model))


def _parse_value(tok: str, cplx: bool, lineno: int):
    try:
        if cplx:
            re_, im = tok.split(":")
            return complex(float(re_), float(im))
        return float(tok)
    except ValueError:
        raise ModelFormatError(f"malformed number {tok!r}", lineno) from None


def loads_model(text: str, kind: str | None = None):
    lines = text.splitlines()
    if not lines:
        raise ModelFormatError("empty model file", 1)
    head = lines[0].split()
    if len(head) != 3 or head[0] != MAGIC:
        raise ModelFormatError(f"expected '{MAGIC} {VERSION} <kind>' header", 1)
    if head[1] != VERSION:
        raise ModelFormatError(f"unsupported version {head[1]!r}", 1)
    file_kind = head[2]
    if file_kind not in KINDS:
        raise ModelFormatError(f"unknown model kind {file_kind!r}", 1)
    if kind is not None and kind != file_kind:
        raise ModelFormatError(f"kind mismatch: expected {kind!r}, file holds {file_kind!r}", 1)
    schema = _SCHEMA[file_kind]

    blocks = {}
    i = 1
    while i < len(lines):
        lineno = i + 1
        parts = lines[i].split()
        i += 1
        if not parts:
            continue
        if parts[0] != "dim" or len(parts) not in (4, 5):
            raise ModelFormatError("expected 'dim <name> <rows> <cols> [<depth>]'", lineno)
        name = parts[1]
        if name not in schema:
            raise ModelFormatError(f"block {name!r} does not belong to a {file_kind!r} model", lineno)
        if name in blocks:
            raise ModelFormatError(f"duplicate block {name!r}", lineno)
        try:
            shape = tuple(int(p) for p in parts[2:])
        except ValueError:
            raise ModelFormatError("dimensions must be integers", lineno) from None
        if any(d < 1 for d in shape):
            raise ModelFormatError("dimensions must be positive", lineno)
        ndim, cplx = schema[name]
        want_rank = {0: 2, 1: 2, 2: 2, 3: 3}[ndim]
        if len(shape) != want_rank or (ndim == 0 and shape != (1, 1)) or (ndim == 1 and shape[0] != 1):
            raise ModelFormatError(f"block {name!r} has the wrong dimensions {shape}", lineno)
        rows, per_row = shape[0], int(np.prod(shape[1:]))
        vals = []
        for _ in range(rows):
            if i >= len(lines):
                raise ModelFormatError(f"file truncated inside block {name!r}", i + 1)
            toks = lines[i].split()
            if len(toks) != per_row:
                raise ModelFormatError(
                    f"block {name!r} expects {per_row} values per row, found {len(toks)}", i + 1)
            vals.extend(_parse_value(t, cplx, i + 1) for t in toks)
            i += 1
        arr = np.array(vals, dtype=complex if cplx else float).reshape(shape)
        if ndim == 0:
            arr = arr.reshape(())
        elif ndim == 1:
            arr = arr.reshape(-1)
        blocks[name] = arr

    missing = [k for k in schema if k not in blocks]
    if missing:
        raise ModelFormatError(f"missing block(s) {', '.join(missing)} (file truncated?)", len(lines))
    try:
        return _build(file_kind, blocks)
    except ModelFormatError:
        raise
    except (ChaosRomError, ValueError) as exc:
        raise ModelFormatError(f"inconsistent model: {exc}") from exc


def _build(kind, b):
    if kind == "dmd":
        n, r = b["Phi"].shape
        if b["Phi_pinv"].shape != (r, n) or b["Omega"].shape != (r,):
            raise ModelFormatError("DMD blocks disagree on n and r")
        return DmdModel(b["Phi"], b["Phi_pinv"], b["Omega"], float(b["dt"].real))
    if kind == "quad":
        n, r = b["Phi"].shape
        if b["x_bar"].shape != (n,) or b["Phi_bar"].shape != (n, r, r) or b["a"].shape != (r,) \
                or b["B"].shape != (r, r) or b["C"].shape != (r, r, r):
            raise ModelFormatError("quadratic-model blocks disagree on n and r")
        return QuadraticModel(b["x_bar"], b["Phi"], b["Phi_bar"], b["a"], b["B"], b["C"])
    nets = [MlpParams(*(b[f"{net}.{part}"] for part in _NET_PARTS)) for net in _NETS]
    constrained = bool(b["constrained"])
    if constrained != (kind == "syco"):
        raise ModelFormatError(f"'constrained' flag contradicts kind {kind!r}")
    return NeuralRom(*nets, constrained, float(b["lambda"]), float(b["omega"]),
                     float(b["upsilon"]), int(b["substeps"]))


def load_model(path, kind: str | None = None):
    with open(path) as fh:
        return loads_model(fh.read(), kind)
