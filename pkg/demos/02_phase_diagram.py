"""Where does each contraction coefficient drop below one?

Sweeps c1 over transmissivity and the resource sqrt(gamma) sigma, then
d_eps over transmissivity and gamma.  The grids go to demos/out/ as CSV, and a
coarse text map is printed: '#' marks coefficient < 1, the cheap region.

    python demos/02_phase_diagram.py
"""

from pathlib import Path

from dispprop.regimes import AxisSpec, phase_diagram_grid, write_grid

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)


def show(grid):
    print(f"\n{grid.coefficient} over {grid.axis1} (rows) x {grid.axis2} (columns, "
          f"{grid.values2[0]:g} .. {grid.values2[-1]:g}); fixed {grid.fixed}")
    for a, row in zip(grid.values1, grid.values):
        print(f"  {grid.axis1}={a:5.2f} " + "".join("#" if v < 1 else "." for v in row))
    print(f"  crossings per row: {grid.crossings_per_row()}")


for nbar in (0.0, 1.0, 5.0):
    g = phase_diagram_grid(AxisSpec("eta", 0.05, 0.95, 10), AxisSpec("resource", 0.1, 10, 60, "log"), "c1",
                           fixed={"nbar": nbar})
    show(g)
    write_grid(g, out / f"c1_nbar{nbar:g}.csv", "csv")

g = phase_diagram_grid(AxisSpec("eta", 0.05, 0.95, 10), AxisSpec("gamma", 1e-3, 10, 60, "log"), "d_eps",
                       fixed={"nbar": 1.0, "M": 1.0, "epsilon": 0.1})
show(g)
write_grid(g, out / "d_eps.csv", "csv")
print(f"\nCSV files written to {out}")
