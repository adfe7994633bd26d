"""Legacy ASCII VTK output for triangle meshes."""

import numpy as np

VTK_TRIANGLE = 5


def write_vtk(path, vertices, triangles, point_data):
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    nv, nt = len(vertices), len(triangles)
    lines = [
        "# vtk DataFile Version 3.0",
        "cdanse",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
    ]
    lines += [f"{x!r} {y!r} 0.0" for x, y in vertices.tolist()]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in triangles.tolist()]
    lines.append(f"CELL_TYPES {nt}")
    lines += [str(VTK_TRIANGLE)] * nt
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [repr(float(v)) for v in values.tolist()]
            else:
                lines.append(f"VECTORS {name} double")
                lines += [f"{a!r} {b!r} 0.0" for a, b in values[:, :2].tolist()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
