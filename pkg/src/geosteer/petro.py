"""Facies-to-resistivity mapping and layered-medium extraction.

The logging forward model works on 1-D layered media, so this module turns
a facies-probability grid into a resistivity grid (argmax facies, canonical
resistivity per facies) and collapses one vertical column into a compact
stack of layers around the tool position.
"""

from dataclasses import dataclass

import numpy as np

# Canonical facies resistivities, Ohm m, indexed like the facies channels
# (background, channel, crevasse).
FACIES_RESISTIVITY = np.array([220.0, 3.6, 4.1])

# At most this many boundaries are kept on each side of the tool; farther
# structure is absorbed into the outermost half-infinite layers.
MAX_BOUNDARIES_PER_SIDE = 3


@dataclass(frozen=True)
class LayeredMedium:
    """A stack of horizontal layers seen by the tool at one position.

    ``boundaries`` are absolute depths (m), strictly increasing, located at
    cell edges.  ``resistivities`` has one entry per layer, top to bottom,
    so ``len(resistivities) == len(boundaries) + 1``; the first and last
    layers extend to infinity.  ``tool_tvd`` is the absolute tool depth and
    never coincides with a boundary (cell centers sit strictly between cell
    edges).
    """

    boundaries: np.ndarray
    resistivities: np.ndarray
    tool_tvd: float

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        r = np.asarray(self.resistivities, dtype=float)
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "resistivities", r)
        if b.ndim != 1 or r.ndim != 1 or r.size != b.size + 1:
            raise ValueError(
                f"need len(resistivities) == len(boundaries) + 1, got {r.size} and {b.size}"
            )
        if b.size and np.any(np.diff(b) <= 0):
            raise ValueError("boundaries must be strictly increasing")
        if np.any(r <= 0) or not np.all(np.isfinite(r)):
            raise ValueError("resistivities must be positive and finite")
        if b.size and np.any(b == self.tool_tvd):
            raise ValueError("tool_tvd must not coincide with a boundary")

    @property
    def n_layers(self):
        return self.resistivities.size


def derive_resistivity(grid):
    """Argmax facies per cell, mapped to canonical resistivities.

    Ties go to the lowest facies index (argmax keeps the first maximum).

    Parameters
    ----------
    grid : ndarray, shape (nz, nx, 3)
        Facies probabilities.

    Returns
    -------
    ndarray, shape (nz, nx)
        Resistivity in Ohm m; only the three canonical values appear.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 3 or grid.shape[-1] != 3:
        raise ValueError(f"expected (nz, nx, 3) probabilities, got {grid.shape}")
    if not np.all(np.isfinite(grid)):
        raise ValueError("facies probabilities contain non-finite values")
    return FACIES_RESISTIVITY[np.argmax(grid, axis=-1)]


def extract_layers(resistivity, column, tool_row, dz=0.5):
    """Collapse one vertical grid column into a layered medium at the tool.

    Vertically adjacent cells with equal resistivity merge into one layer;
    boundaries sit on cell edges (depth = row index * dz measured from the
    top of the grid).  At most three boundaries are retained above the tool
    and three below -- the nearest ones -- and the layers beyond the
    outermost retained boundaries extend to infinity, so the result has at
    most seven layers.  The tool sits at the center of cell ``tool_row``.

    Parameters
    ----------
    resistivity : ndarray, shape (nz, nx)
    column : int
        Along-well cell index of the tool.
    tool_row : int
        Vertical cell index of the tool.
    dz : float
        Cell thickness, m.

    Returns
    -------
    LayeredMedium
    """
    resistivity = np.asarray(resistivity, dtype=float)
    if resistivity.ndim != 2:
        raise ValueError(f"expected a 2-D resistivity grid, got shape {resistivity.shape}")
    nz, nx = resistivity.shape
    if not 0 <= column < nx:
        raise IndexError(f"column {column} outside grid with nx={nx}")
    if not 0 <= tool_row < nz:
        raise IndexError(f"tool_row {tool_row} outside grid with nz={nz}")

    col = resistivity[:, column]
    tool_tvd = (tool_row + 0.5) * dz

    # Run-length encode the column: boundary wherever adjacent cells differ.
    change = np.flatnonzero(col[1:] != col[:-1])  # boundary after row i
    depths = (change + 1) * dz
    values = col[np.concatenate(([0], change + 1))]  # one per run, top down

    above = np.flatnonzero(depths < tool_tvd)
    below = np.flatnonzero(depths > tool_tvd)
    keep_above = above[-MAX_BOUNDARIES_PER_SIDE:]
    keep_below = below[:MAX_BOUNDARIES_PER_SIDE]
    keep = np.concatenate((keep_above, keep_below))

    if keep.size == 0:
        return LayeredMedium(np.empty(0), np.array([values[0]]), tool_tvd)

    lo, hi = keep[0], keep[-1]
    return LayeredMedium(depths[lo : hi + 1], values[lo : hi + 2], tool_tvd)
