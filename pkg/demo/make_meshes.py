"""Regenerate the demo meshes."""
from mpoc.mesh import rectangle_mesh, save_mesh

slip = dict(top=("G2", "G3"), bottom=("G2", "G3"))
save_mesh(rectangle_mesh(8, 4, 0.0, 2.0, 0.0, 1.0, tags=slip), "channel.msh")
save_mesh(rectangle_mesh(4, 4, tags=slip), "coarse.msh")
