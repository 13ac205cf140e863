"""CSV tables with a provenance header, and the text cache for STT stacks."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import DynamicsModel, SttStack
from .tensor import Tensor1m, dumps, read_records


def format_value(v) -> str:
    """Fixed text form: floats with 17 significant digits, bools as 0/1."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.17g" % v
    return str(v)


def header_line(scenario_hash: str, seed) -> str:
    return f"# tensornorms {__version__} scenario={scenario_hash} seed={seed}"


def write_csv(path, columns, rows, scenario_hash: str = "none", seed=0) -> Path:
    """Write rows (sequences aligned with ``columns``) under a provenance comment."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(header_line(scenario_hash, seed) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
            w.writerow([format_value(v) for v in row])
    return path


def read_csv(path):
    """(header comment, columns, rows as lists of strings)."""
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [r for r in reader]
    return first, columns, rows


def read_csv_columns(path) -> dict:
    """Columns as float arrays where every entry parses, otherwise as string lists."""
    _, columns, rows = read_csv(path)
    out = {}
    for j, name in enumerate(columns):
        vals = [r[j] for r in rows]
        try:
            out[name] = np.array([float(v) for v in vals])
        except ValueError:
            out[name] = vals
    return out


# -- STT cache ---------------------------------------------------------------

def _floats(vals) -> str:
    return " ".join(repr(float(v)) for v in vals)


def dumps_stack(stack: SttStack) -> str:
    model = stack.model or DynamicsModel.free()
    lines = [
        "sttstack",
        f"model {model.kind} {model.mu!r}",
        f"order {stack.order}",
        f"t0 {float(stack.t0)!r}",
        f"tf {float(stack.tf)!r}",
        f"rtol {float(stack.rtol)!r}",
        f"atol {float(stack.atol)!r}",
        f"nfev {int(stack.nfev)}",
        f"x0 {_floats(stack.x0)}",
        f"xf {_floats(stack.xf)}",
        f"steps {len(stack.steps)} {_floats(stack.steps)}".rstrip(),
    ]
    body = "\n".join(lines) + "\n" + dumps(Tensor1m(stack.phi, symmetrize=False))
    for m in range(2, stack.order + 1):
        body += dumps(stack.stt(m))
    return body


def loads_stacks(text: str) -> list[SttStack]:
    stacks = []
    blocks = text.split("sttstack\n")
    if blocks[0].strip():
        raise ValueError("STT cache must start with an 'sttstack' record")
    for block in blocks[1:]:
        meta = {}
        lines = block.splitlines()
        i = 0
        while i < len(lines) and not lines[i].startswith("tensor1m"):
            key, _, rest = lines[i].partition(" ")
            meta[key] = rest
            i += 1
        tensors = read_records("\n".join(lines[i:]))
        kind, mu = meta["model"].split()
        order = int(meta["order"])
        if len(tensors) != order:
            raise ValueError(f"expected {order} tensors, found {len(tensors)}")
        steps = [float(v) for v in meta["steps"].split()[1:]]
        stacks.append(SttStack(
            x0=np.array([float(v) for v in meta["x0"].split()]),
            t0=float(meta["t0"]), tf=float(meta["tf"]),
            xf=np.array([float(v) for v in meta["xf"].split()]),
            phi=np.array(tensors[0].entries),
            psi2=tensors[1] if order >= 2 else None,
            psi3=tensors[2] if order >= 3 else None,
            model=DynamicsModel(kind, float(mu)), steps=np.array(steps),
            rtol=float(meta["rtol"]), atol=float(meta["atol"]), nfev=int(meta["nfev"]),
        ))
    return stacks


def save_stacks(path, stacks) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(dumps_stack(s) for s in stacks))
    return path


def load_stacks(path) -> list[SttStack]:
    return loads_stacks(Path(path).read_text())
