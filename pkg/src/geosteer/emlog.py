"""Along-well electromagnetic logging responses for layered media.

The tool is modeled as a bank of depth-sensitivity kernels acting on the
conductivity profile around the tool:

* ``symmetric`` channels: unit-mass Gaussian kernels of std ``scale``.
  Their response is a convex average of the layer conductivities
  (apparent conductivity, S/m); in a homogeneous medium they return
  exactly 1/R.
* ``directional`` channels: first-derivative-of-Gaussian kernels,
  normalized so a unit conductivity step at the tool depth reads half the
  step, positive when the more conductive medium lies below.  In a
  homogeneous medium they return exactly 0.

Responses integrate in closed form over a layered medium: the symmetric
kernel's layer weight is a difference of Gaussian CDFs, the directional
kernel's a difference of Gaussian bell values.  The largest kernels make
the tool sensitive to boundaries tens of meters away, which is what lets
an inversion say something about geology the well has not reached yet.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

SYMMETRIC = "symmetric"
DIRECTIONAL = "directional"

#: Kernel stds (m) of the default tool: four symmetric (shallow, apparent
#: conductivity) and nine directional (deep, signed contrast) channels.
DEFAULT_SYMMETRIC_SCALES = (0.25, 0.5, 1.0, 2.0)
DEFAULT_DIRECTIONAL_SCALES = (2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0)

_MAX_SCALE = 30.0


@dataclass(frozen=True)
class Channel:
    kind: str
    scale: float

    def __post_init__(self):
        if self.kind not in (SYMMETRIC, DIRECTIONAL):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not 0.0 < self.scale <= _MAX_SCALE:
            raise ValueError(
                f"channel scale must be in (0, {_MAX_SCALE}] m, got {self.scale}"
            )


@dataclass(frozen=True)
class ToolSpec:
    """Ordered bank of measurement channels."""

    channels: tuple

    def __post_init__(self):
        if len(self.channels) == 0:
            raise ValueError("tool must define at least one channel")
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def n_channels(self):
        return len(self.channels)


def default_tool():
    """The standard 13-channel tool (4 symmetric + 9 directional)."""
    channels = [Channel(SYMMETRIC, s) for s in DEFAULT_SYMMETRIC_SCALES]
    channels += [Channel(DIRECTIONAL, s) for s in DEFAULT_DIRECTIONAL_SCALES]
    return ToolSpec(tuple(channels))


def load_tool_spec(path):
    """Read a ToolSpec from a JSON file: {"channels": [{"kind", "scale"}, ...]}."""
    import json

    with open(path) as fh:
        data = json.load(fh)
    channels = tuple(Channel(c["kind"], float(c["scale"])) for c in data["channels"])
    return ToolSpec(channels)


def forward(medium, tool=None):
    """Closed-form channel responses for one layered medium.

    Parameters
    ----------
    medium : LayeredMedium
    tool : ToolSpec, optional

    Returns
    -------
    ndarray, shape (n_channels,)
        Symmetric channels in S/m (within [min, max] layer conductivity);
        directional channels as signed conductivity contrasts.
    """
    if tool is None:
        tool = default_tool()
    sigma = 1.0 / medium.resistivities  # per-layer conductivity, top down
    # Layer edges relative to the tool, with half-infinite outer layers.
    edges = np.concatenate(([-np.inf], medium.boundaries - medium.tool_tvd, [np.inf]))
    lo, hi = edges[:-1], edges[1:]

    out = np.empty(len(tool.channels))
    for i, ch in enumerate(tool.channels):
        if ch.kind == SYMMETRIC:
            # Unit-mass Gaussian: layer weight = CDF(hi/s) - CDF(lo/s).
            weights = ndtr(hi / ch.scale) - ndtr(lo / ch.scale)
        else:
            # Derivative-of-Gaussian kernel w(r) = r/(2 s^2) exp(-r^2/(2 s^2));
            # integrating over a layer gives half a difference of bell values.
            weights = 0.5 * (_bell(lo, ch.scale) - _bell(hi, ch.scale))
        out[i] = np.dot(weights, sigma)
    return out


def _bell(r, s):
    """exp(-r^2 / (2 s^2)); exp(-inf) evaluates to 0 for the outer layers."""
    return np.exp(-0.5 * (r / s) ** 2)


def simulate_log(resistivity, well_cells, tool=None, dz=0.5):
    """Run the tool along a horizontal well through a resistivity grid.

    Parameters
    ----------
    resistivity : ndarray, shape (nz, nx)
    well_cells : sequence of (row, column)
        Cells pierced by the well; the well must be horizontal (one row).
    tool : ToolSpec, optional
    dz : float

    Returns
    -------
    ndarray, shape (n_positions, n_channels)
    """
    from .petro import extract_layers

    if tool is None:
        tool = default_tool()
    well_cells = [(int(r), int(c)) for r, c in well_cells]
    if len(well_cells) == 0:
        raise ValueError("well must contain at least one cell")
    rows = {r for r, _ in well_cells}
    if len(rows) != 1:
        raise ValueError(f"well must be horizontal (single row), got rows {sorted(rows)}")

    out = np.empty((len(well_cells), tool.n_channels))
    for i, (row, col) in enumerate(well_cells):
        medium = extract_layers(resistivity, col, row, dz=dz)
        out[i] = forward(medium, tool)
    return out
