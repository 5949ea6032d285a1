"""Binary and CSV field dumps.

Binary layout: one ASCII header line

    HDBVP1 n m N K L t_min t_max

followed by little-endian float64 (re, im) pairs in t-major, lattice, then
component-minor order.  The two trailing header tokens pin the geometric
t-nodes; readers that only know the first six tokens still work.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .grid import Grid, make_grid

MAGIC = "HDBVP1"


class DumpError(ValueError):
    pass


def _header(grid: Grid) -> str:
    return (f"{MAGIC} {grid.n} {grid.m} {grid.N} {grid.K} {grid.L!r} "
            f"{float(grid.t_nodes[0])!r} {float(grid.t_nodes[-1])!r}\n")


def _parse_header(line: str):
    tok = line.split()
    if not tok or tok[0] != MAGIC:
        raise DumpError(f"bad header {line[:40]!r}")
    n, m, N, K = (int(v) for v in tok[1:5])
    L = float(tok[5])
    if len(tok) >= 8:
        t_min, t_max = float(tok[6]), float(tok[7])
    else:
        t_min, t_max = 1.0, 2.0
    return n, m, N, K, L, t_min, t_max


def _grid(n, m, N, K, L, t_min, t_max, c0, c1) -> Grid:
    if K == 1:
        # a single slice stores its height twice; rebuild a window centred on it
        t_min, t_max = t_min / 2, t_min * 2
    return make_grid(n, m, N, L, t_min, t_max, K, c0, c1)


def write_dump(path, grid: Grid, values: np.ndarray) -> Path:
    path = Path(path)
    values = np.asarray(values, dtype=complex).reshape(grid.K, grid.P, -1)
    data = np.empty(values.shape + (2,), dtype="<f8")
    data[..., 0] = values.real
    data[..., 1] = values.imag
    with open(path, "wb") as fh:
        fh.write(_header(grid).encode("ascii"))
        fh.write(data.tobytes(order="C"))
    return path


def read_dump(path, c0=2.0, c1=1.0):
    """Return (grid, values[K, P, c]); c is inferred from the byte count."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        line = fh.readline().decode("ascii")
        n, m, N, K, L, t_min, t_max = _parse_header(line)
        raw = np.frombuffer(fh.read(), dtype="<f8")
    P = N ** n
    if raw.size % (2 * K * P):
        raise DumpError("payload size does not match header")
    c = raw.size // (2 * K * P)
    raw = raw.reshape(K, P, c, 2)
    grid = _grid(n, m, N, K, L, t_min, t_max, c0, c1)
    return grid, raw[..., 0] + 1j * raw[..., 1]


def write_csv(path, grid: Grid, values: np.ndarray) -> Path:
    path = Path(path)
    values = np.asarray(values).reshape(grid.K, grid.P, -1)
    with open(path, "w", newline="") as fh:
        fh.write("# " + _header(grid))
        w = csv.writer(fh)
        w.writerow(["t", "x_index", "component", "re", "im"])
        for k in range(grid.K):
            t = repr(float(grid.t_nodes[k]))
            for p in range(grid.P):
                for c in range(values.shape[2]):
                    z = values[k, p, c]
                    w.writerow([t, p, c, repr(float(z.real)), repr(float(z.imag))])
    return path


def read_csv(path, c0=2.0, c1=1.0):
    path = Path(path)
    with open(path) as fh:
        first = fh.readline()
        n, m, N, K, L, t_min, t_max = _parse_header(first.lstrip("# "))
        rows = list(csv.reader(fh))[1:]
    P = N ** n
    c = len(rows) // (K * P)
    out = np.zeros((K, P, c), dtype=complex)
    for i, r in enumerate(rows):
        k, rem = divmod(i, P * c)
        out[k, int(r[1]), int(r[2])] = float(r[3]) + 1j * float(r[4])
    return _grid(n, m, N, K, L, t_min, t_max, c0, c1), out


def nearest_slice(grid: Grid, t: float) -> int:
    return int(np.argmin(np.abs(np.log(grid.t_nodes / t))))
