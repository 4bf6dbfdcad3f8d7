"""Decode a Y-shaped skeleton into a closed mesh and write it as OBJ.

The merge edge between the two arm tips closes a loop, so expect genus 1.

    python3 demos/decode_to_mesh.py [out.obj]
"""
import sys

from minsurf import DecodeParams, Operator, Skeleton, VirtualEdge, check_mesh, decode, export_obj
from minsurf import mean_curvature_stats

skel = Skeleton.from_arrays(
    [(0.0, 0.0, 0.0), (1.0, 0.6, 0.0), (1.0, -0.6, 0.0), (0.3, 0.0, 0.8)],
    [0.15, 0.1, 0.1, 0.12],
    [(0, 1), (0, 2), (0, 3)],
    [VirtualEdge(1, 2, Operator.MERGE)],
)
params = DecodeParams(grid_resolution=48, relax_iters=80)

mesh = decode(skel, params)
report = check_mesh(mesh)
print(f"{report.vertices} vertices, {report.faces} faces")
print(f"closed manifold: {report.valid_closed_manifold}, genus {report.genus}")
print(f"mean |H| {mean_curvature_stats(mesh).mean_abs:.3f}")

out = sys.argv[1] if len(sys.argv) > 1 else "y_junction.obj"
export_obj(mesh, out)
print("wrote", out)
