"""
Antenna topologies and positioner grids
=======================================

Builds the three 64-element base-station deployments, checks their
geometry, and enumerates the positioner grids that tile the user area.
"""

import numpy as np

from mamimo import TopologyKind, build_topology, default_positioner_grids, grid_positions
from mamimo.geometry import geometry_to_csv

# The rectangular panel: 8x8 elements, 70 mm pitch, centred 1 m above the
# floor, facing the user area in +y.
ura = build_topology(TopologyKind.URA)
print(f"URA: {ura.n_elements} elements")
print(f"  x span   : {ura.positions_mm[:, 0].min():7.1f} .. {ura.positions_mm[:, 0].max():7.1f} mm")
print(f"  z centre : {ura.positions_mm[:, 2].mean():7.1f} mm")

# The linear deployment keeps the same pitch; 64 elements span 63 pitches
# between the first and last element centres.
ula = build_topology(TopologyKind.ULA)
span = ula.positions_mm[:, 0].max() - ula.positions_mm[:, 0].min()
print(f"ULA: centre-to-centre span {span:.0f} mm")

# Eight sub-arrays of eight elements on an octagon around the user area,
# every element facing the centre.
da = build_topology(TopologyKind.DA)
print(f"DA : {da.n_elements} elements, all facing vectors unit norm:",
      bool(np.allclose(np.linalg.norm(da.facings, axis=1), 1.0)))

# Element lists can be exported (and re-imported) as a coordinate CSV, the
# same format used to load a measured coordinate list.
geometry_to_csv(da, "da_coordinates.csv")
print("wrote da_coordinates.csv")

# The user area is scanned by four positioner tables in a 2x2 arrangement.
# At the default 5 mm resolution each 1250 mm x 1250 mm table gives a
# 251 x 251 grid.
grids = default_positioner_grids()
for grid in grids:
    print(f"positioner {grid.positioner_id}: origin ({grid.origin.x:8.1f}, "
          f"{grid.origin.y:8.1f}) mm, {grid.nx} x {grid.ny} = {grid.node_count} nodes")

total = sum(g.node_count for g in grids)
print(f"total labelled positions over the four tables: {total}")

# Serpentine traversal visits every node once while reversing direction on
# alternate rows; the orders diverge where the second row begins.
from mamimo import SampleGrid, Position3, Traversal

tiny = SampleGrid(origin=Position3(0, 0, 0), x_extent_mm=10, y_extent_mm=10,
                  resolution_mm=5)
raster = grid_positions(tiny, Traversal.RASTER)
serp = grid_positions(tiny, Traversal.SERPENTINE)
print("raster 3x3    :", [(p.x, p.y) for p in raster])
print("serpentine 3x3:", [(p.x, p.y) for p in serp])
