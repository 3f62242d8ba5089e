"""Regenerates the bundled end-to-end fixture under tests/data/golden.

Counts and cell-level covariates come from `firelgcp simulate`; the script
then spreads every cell value over a 4x4 block of fine pixels (zero-sum
texture, so block means are exact) and adds a calendar-month cycle to the
temperature rasters that the `anomalies` step removes again.

usage: python tools/make_golden_fixture.py build/firelgcp tests/data/golden
"""

import csv
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

SIM_CFG = """\
n_rows = 6
n_cols = 8
years = 3
variant = AR1_YEARLY
range = 6
sd = 0.9
rho = 0.7
include_time = true
beta = -1.2, 0.2, 0.5, 0.3
covariates = elev:static:smooth:6; temp:dynamic:white
seasonal = two_peak:7:3:0.8
seed = 2024
mesh_max_edge_inner = 3
mesh_max_edge_outer = 8
mesh_margin = 6
"""

MODEL_CFG = """\
variant = AR1_YEARLY
mesh_max_edge_inner = 3
mesh_max_edge_outer = 8
mesh_margin = 6
range0 = 6
init_range = 8
init_sd = 1
init_rho = 0.5
budget = 400
seed = 7
"""

INACTIVE = {0, 7}  # two corner cells outside the study area
PIX = 4  # fine pixels per cell side
TEXTURE = [[0.3, -0.1, 0.2, -0.4], [-0.2, 0.4, -0.3, 0.1], [0.1, -0.3, 0.4, -0.2], [-0.2, 0.0, -0.3, 0.5]]


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_raster(path, values, n_rows, n_cols):
    # values[r][c] with r = 0 the southernmost fine row
    with open(path, "w") as f:
        f.write(f"ncols {n_cols * PIX}\nnrows {n_rows * PIX}\nxllcorner 0\nyllcorner 0\n")
        f.write(f"cellsize {2.0 / PIX}\nNODATA_value -9999\n")
        for r in reversed(range(n_rows * PIX)):
            f.write(" ".join(f"{values[r][c]:.6f}" for c in range(n_cols * PIX)) + "\n")


def fine(cell_values, n_rows, n_cols, amplitude):
    out = [[0.0] * (n_cols * PIX) for _ in range(n_rows * PIX)]
    for cell, v in cell_values.items():
        row, col = divmod(cell, n_cols)
        for i in range(PIX):
            for j in range(PIX):
                out[row * PIX + i][col * PIX + j] = v + amplitude * TEXTURE[i][j]
    return out


def main(cli, out_dir):
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sim.cfg").write_text(SIM_CFG)
    (out / "model.cfg").write_text(MODEL_CFG)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([cli, "--quiet", "simulate", "--config", str(out / "sim.cfg"), "--out", tmp], check=True)
        tmp = pathlib.Path(tmp)
        grid_lines = (tmp / "grid.asc").read_text().splitlines()
        n_cols = int(grid_lines[0].split()[1])
        n_rows = int(grid_lines[1].split()[1])
        static = {int(r["cell_id"]): float(r["elev"]) for r in read_csv(tmp / "covariates" / "static.csv")}
        dynamic = {}
        for r in read_csv(tmp / "covariates" / "dynamic.csv"):
            dynamic.setdefault(int(r["month_index"]), {})[int(r["cell_id"])] = float(r["temp"])
        counts = [r for r in read_csv(tmp / "counts.csv") if int(r["cell_id"]) not in INACTIVE]
        shutil.copy(tmp / "truth.json", out / "truth.json")

    header, body = grid_lines[:6], []
    for k, line in enumerate(grid_lines[6:]):
        row = n_rows - 1 - k
        body.append(" ".join("-9999" if row * n_cols + c in INACTIVE else "1" for c in range(n_cols)))
    (out / "grid.asc").write_text("\n".join(header + body) + "\n")

    with open(out / "counts.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["cell_id", "month_index", "count"])
        w.writeheader()
        w.writerows(counts)

    rasters = out / "rasters"
    rasters.mkdir(exist_ok=True)
    listing = [("elev", "NA", "rasters/elev.asc")]
    write_raster(rasters / "elev.asc", fine(static, n_rows, n_cols, 0.5), n_rows, n_cols)
    for m, values in sorted(dynamic.items()):
        cycle = 8.0 * math.sin(2.0 * math.pi * ((m - 1) % 12) / 12.0)
        shifted = {c: 15.0 + cycle + v for c, v in values.items()}
        name = f"rasters/temp_{m:03d}.asc"
        write_raster(out / name, fine(shifted, n_rows, n_cols, 1.0), n_rows, n_cols)
        listing.append(("temp", str(m), name))
    with open(out / "rasters.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variable", "month_index", "path"])
        w.writerows(listing)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
