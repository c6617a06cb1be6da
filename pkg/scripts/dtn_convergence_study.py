#!/usr/bin/env python3
"""Mesh-refinement study of the Dirichlet-to-Neumann solve.

Prints the relative L2 error of the recovered Neumann data for degree-1 and
degree-2 harmonic Dirichlet traces across icosphere levels, with observed
orders in the node spacing.
"""

import time

import numpy as np

from potdeg.bie import assemble_neumann_system, solve_neumann_data
from potdeg.geometry import make_unit_sphere


def main():
    rows = []
    # level 1 is below the resolution the normal-derivative stencil needs
    for level in (2, 3, 4):
        t0 = time.time()
        mesh = make_unit_sphere(level)
        sys_ = assemble_neumann_system(mesh)
        z = mesh.nodes[:, 2]
        q = mesh.nodes[:, 2] ** 2 - (mesh.nodes[:, 0] ** 2 + mesh.nodes[:, 1] ** 2) / 2
        e1 = np.linalg.norm(solve_neumann_data(sys_, z) - z) / np.linalg.norm(z)
        e2 = np.linalg.norm(solve_neumann_data(sys_, q) - 2 * q) / np.linalg.norm(2 * q)
        h = float(np.mean(mesh.node_spacing))
        rows.append((level, mesh.n_nodes, h, e1, e2, time.time() - t0))

    print(f"{'level':>5} {'nodes':>6} {'h':>8} {'err deg1':>10} {'err deg2':>10} "
          f"{'ord1':>6} {'ord2':>6} {'secs':>6}")
    for i, (level, n, h, e1, e2, dt) in enumerate(rows):
        if i == 0:
            o1 = o2 = float("nan")
        else:
            hp, ep1, ep2 = rows[i - 1][2], rows[i - 1][3], rows[i - 1][4]
            o1 = np.log(ep1 / e1) / np.log(hp / h)
            o2 = np.log(ep2 / e2) / np.log(hp / h)
        print(f"{level:>5} {n:>6} {h:>8.4f} {e1:>10.2e} {e2:>10.2e} "
              f"{o1:>6.2f} {o2:>6.2f} {dt:>6.1f}")


if __name__ == "__main__":
    main()
