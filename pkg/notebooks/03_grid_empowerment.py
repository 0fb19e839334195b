"""
Empowerment on grid worlds
==========================

The same solver applied to an agent moving on a grid: the channel maps
T-step action sequences to the final cell.
"""

from pathlib import Path

from repemp import data_path
from repemp.envemp import env_empowerment, load_grid

grids = Path(data_path("grids"))
mdp = load_grid(grids / "rooms.grid")

# Bits per cell for T = 1..3; walls print as '#'.
for T in (1, 2, 3):
    print(f"T = {T}")
    for y in range(mdp.height):
        row = []
        for x in range(mdp.width):
            if not mdp.is_free((x, y)):
                row.append("  # ")
            else:
                row.append(f"{env_empowerment(mdp, (x, y), T).value:4.1f}")
        print(" ".join(row))
    print()

# %%
# Slipping makes moves unreliable, so the centre of the slippery grid
# scores below log2(5) even with all four neighbours open.

slip = load_grid(grids / "slippery.grid")
for T in (1, 2):
    print(f"slippery T={T}: {env_empowerment(slip, slip.start, T).value:.3f} bits")
