"""Environmental empowerment on small grid worlds.

Capacity of the channel from T-step action sequences to the final cell, using
the same solver as representational empowerment. Blocked moves resolve to
``stay``.

Grid files are a TOML header, a line ``---``, then an ASCII map
(``#`` or blank wall, ``.`` floor, ``S`` start)::

    horizon = 2
    noise = 0.0
    ---
    #####
    #.S.#
    #####
"""

from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .empowerment import ENUMERATION_CAP, Channel, EmpowermentReport, EnumerationCapExceeded, channel_report

__all__ = ["ACTIONS", "GridMDP", "parse_grid", "load_grid", "env_channel", "env_empowerment",
           "reachable_states"]

ACTIONS = ("up", "down", "left", "right", "stay")
_MOVES = {"up": (0, -1), "down": (0, 1), "left": (-1, 0), "right": (1, 0), "stay": (0, 0)}

Cell = tuple[int, int]


@dataclass(frozen=True)
class GridMDP:
    width: int
    height: int
    walls: frozenset = frozenset()
    noise: float = 0.0  # probability that any action resolves to stay
    start: Cell | None = None
    horizon: int = 1

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must be a probability")
        object.__setattr__(self, "walls", frozenset(self.walls))

    @property
    def deterministic(self) -> bool:
        return self.noise == 0.0

    def is_free(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height and cell not in self.walls

    @property
    def cells(self) -> list[Cell]:
        return [(x, y) for y in range(self.height) for x in range(self.width) if (x, y) not in self.walls]

    def move(self, cell: Cell, action: str) -> Cell:
        dx, dy = _MOVES[action]
        nxt = (cell[0] + dx, cell[1] + dy)
        return nxt if self.is_free(nxt) else cell

    def transition(self, cell: Cell, action: str) -> dict[Cell, float]:
        if not self.is_free(cell):
            raise ValueError(f"{cell} is not a free cell")
        moved = self.move(cell, action)
        if self.noise == 0.0 or moved == cell:
            return {moved: 1.0}
        return {moved: 1.0 - self.noise, cell: self.noise}


def parse_grid(text: str) -> GridMDP:
    header, sep, body = text.partition("\n---\n")
    if not sep:
        header, body = "", text
    meta = tomllib.loads(header) if header.strip() else {}
    rows = [line.rstrip("\n") for line in body.splitlines() if line.strip()]
    if not rows:
        raise ValueError("empty grid map")
    width = max(len(r) for r in rows)
    walls, start = set(), None
    for y, row in enumerate(rows):
        for x, ch in enumerate(row.ljust(width, "#")):
            if ch in "# ":
                walls.add((x, y))
            elif ch == "S":
                start = (x, y)
            elif ch != ".":
                raise ValueError(f"unknown map character {ch!r} at {(x, y)}")
    return GridMDP(width, len(rows), frozenset(walls), float(meta.get("noise", 0.0)), start,
                   int(meta.get("horizon", 1)))


def load_grid(path: str | Path) -> GridMDP:
    return parse_grid(Path(path).read_text())


def _rollout(mdp: GridMDP, s: Cell, seq) -> dict[Cell, float]:
    dist = {s: 1.0}
    for a in seq:
        nxt: dict[Cell, float] = {}
        for cell, p in dist.items():
            for c2, q in mdp.transition(cell, a).items():
                nxt[c2] = nxt.get(c2, 0.0) + p * q
        dist = nxt
    return dist


def env_channel(mdp: GridMDP, s: Cell, T: int, cap: int = ENUMERATION_CAP) -> Channel:
    if T < 1:
        raise ValueError("horizon must be >= 1")
    size = len(ACTIONS) ** T
    if size > cap:
        raise EnumerationCapExceeded(size, cap)
    inputs = list(itertools.product(ACTIONS, repeat=T))
    rows = [_rollout(mdp, s, seq) for seq in inputs]
    outcomes = sorted({c for row in rows for c in row}, key=lambda c: (c[1], c[0]))
    index = {c: j for j, c in enumerate(outcomes)}
    matrix = np.zeros((len(inputs), len(outcomes)))
    for i, row in enumerate(rows):
        for c, p in row.items():
            matrix[i, index[c]] = p
    return Channel(inputs, outcomes, matrix)


def env_empowerment(mdp: GridMDP, s: Cell, T: int, tol: float = 1e-9,
                    cap: int = ENUMERATION_CAP) -> EmpowermentReport:
    """Capacity of the action-sequence -> final-cell channel from ``s``."""
    return channel_report(env_channel(mdp, s, T, cap), "capacity", tol)


def reachable_states(mdp: GridMDP, s: Cell, T: int) -> set[Cell]:
    """Cells reachable in exactly T steps (deterministic dynamics)."""
    frontier = {s}
    for _ in range(T):
        frontier = {mdp.move(c, a) for c in frontier for a in ACTIONS}
    return frontier
