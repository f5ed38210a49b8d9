"""CSV tables and legacy ASCII VTK output."""
from __future__ import annotations

import numpy as np

# VTK quadratic triangle: corners, then midpoints of (0,1), (1,2), (2,0)
_VTK_ORDER = np.array([0, 1, 2, 5, 3, 4])


def format_number(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.16e}"


def write_csv(path, header, rows):
    """Comma-separated table; floats with 17 significant digits."""
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(format_number(v) for v in r) + "\n")


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(x) for x in line.strip().split(",")] for line in fh if line.strip()]
    return header, np.array(rows)


def write_vtk(path, S, name, values, title="mpoc field"):
    """One point-data field on the quadratic mesh as a legacy ASCII unstructured grid.

    ``values`` is a scalar nodal vector (n2) or a blocked vector (2 n2).
    """
    n2 = S.n2
    values = np.asarray(values, dtype=float)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {n2} double"]
    lines += [f"{x:.16e} {y:.16e} 0" for x, y in S.nodes]
    nt = S.nt
    lines.append(f"CELLS {nt} {7 * nt}")
    lines += ["6 " + " ".join(str(i) for i in c[_VTK_ORDER]) for c in S.cell_dofs]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["22"] * nt
    lines.append(f"POINT_DATA {n2}")
    if values.shape == (2 * n2,):
        lines.append(f"VECTORS {name} double")
        lines += [f"{a:.16e} {b:.16e} 0" for a, b in zip(values[:n2], values[n2:])]
    elif values.shape == (n2,):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{v:.16e}" for v in values]
    else:
        raise ValueError(f"field {name} has {values.size} values for {n2} nodes")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
