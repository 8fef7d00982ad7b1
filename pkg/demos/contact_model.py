"""Walk through the kinematic contact model on a round socket.

The plug first lands on the block beside the hole and slides across the
top until it drops in. A sideways push while inserted then meets the wall.

    python demos/contact_model.py
"""
import numpy as np

from deltainsert.geometry import Pose4
from deltainsert.harness import standard_suite
from deltainsert.world import is_success, make_scene, resolve_motion


def show(label, scene, start, target):
    got, ev = resolve_motion(scene, start, target)
    g = scene.goal
    print(f"{label:<22} offset from goal=({1e3 * (got.x - g.x):+.2f}, {1e3 * (got.y - g.y):+.2f}, "
          f"{1e3 * (got.z - g.z):+.2f}) mm  surface={ev.surface_contact} wall={ev.wall_contact} "
          f"axes={sorted(ev.clamped_axes)}")
    return got


scene = make_scene(standard_suite()[0], np.random.default_rng(0))
g, top = scene.goal, scene.socket_spec.block_top
print(f"round socket at ({scene.socket_pose[0]:.4f}, {scene.socket_pose[1]:.4f}), "
      f"block top {top * 1e3:.1f} mm, goal depth {(top - g.z) * 1e3:.1f} mm\n")

beside = Pose4(g.x + 0.02, g.y, top + 0.01, g.psi)
landed = show("descend beside hole", scene, beside, beside.replace(z=g.z))

slid = show("slide toward hole", scene, landed, Pose4(g.x, g.y, g.z, g.psi))
print(f"{'':<22} inserted: {is_success(scene, slid)}")

show("push sideways inside", scene, slid, slid.replace(x=slid.x + 0.005))
