"""Space-time fields on tensor meshes over (0,T) x Omega."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["GridField", "read_binary", "write_binary", "read_csv", "write_csv"]

_MAGIC = b"OKGF"


@dataclass
class GridField:
    """Values on a tensor mesh; axis 0 is time, the rest are space.

    ``centering`` is "node" (values at mesh nodes, boundary nodes included) or
    "cell" (values at cell midpoints). Vector fields carry a trailing component axis.
    """

    values: np.ndarray
    steps: tuple
    origin: tuple = ()
    centering: str = "node"
    vector: bool = False
    boundary_zero: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.steps = tuple(float(s) for s in self.steps)
        if not self.origin:
            self.origin = (0.0,) * len(self.steps)
        self.origin = tuple(float(o) for o in self.origin)
        if any(not s > 0 for s in self.steps):
            raise ValueError("mesh steps must be strictly positive")
        if self.centering not in ("node", "cell"):
            raise ValueError("centering must be 'node' or 'cell'")
        need = len(self.steps) + (1 if self.vector else 0)
        if self.values.ndim != need:
            raise ValueError(f"values have {self.values.ndim} axes, mesh expects {need}")
        if self.boundary_zero and self.centering == "node":
            if np.max(np.abs(self._spatial_boundary()), initial=0.0) != 0.0:
                raise ValueError("boundary flag set but field does not vanish on the spatial boundary")

    # geometry -----------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.values.shape[: len(self.steps)]

    @property
    def ndim_space(self) -> int:
        return len(self.steps) - 1

    def axis(self, i: int) -> np.ndarray:
        n = self.shape[i]
        off = 0.5 if self.centering == "cell" else 0.0
        return self.origin[i] + (np.arange(n) + off) * self.steps[i]

    def coords(self):
        """Time coordinates of shape S and space coordinates of shape S + (d,)."""
        mesh = np.meshgrid(*[self.axis(i) for i in range(len(self.steps))], indexing="ij")
        return mesh[0], np.stack(mesh[1:], axis=-1)

    @property
    def measure(self) -> float:
        n = np.array(self.shape) - (1 if self.centering == "node" else 0)
        return float(np.prod(n * np.array(self.steps)))

    def _spatial_boundary(self) -> np.ndarray:
        parts = []
        for ax in range(1, len(self.steps)):
            parts.append(np.take(self.values, [0, -1], axis=ax).ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    # quadrature ---------------------------------------------------------
    def cell_values(self) -> tuple:
        """Midpoint samples: values and coordinates at cell centres."""
        if self.centering == "cell":
            t, x = self.coords()
            return self.values, t, x
        v = self.values
        for ax in range(len(self.steps)):
            n = v.shape[ax]
            v = 0.5 * (np.take(v, range(0, n - 1), axis=ax) + np.take(v, range(1, n), axis=ax))
        axes = [self.axis(i)[:-1] + 0.5 * self.steps[i] for i in range(len(self.steps))]
        mesh = np.meshgrid(*axes, indexing="ij")
        return v, mesh[0], np.stack(mesh[1:], axis=-1)

    def cell_space_gradient(self) -> np.ndarray:
        """Spatial gradient of a node field at cell centres.

        Along each axis the difference quotient is averaged over the 2^(d) cell
        corners in the remaining directions, which is exact for multilinear data.
        """
        if self.centering != "node" or self.vector:
            raise ValueError("cell gradients need a scalar node field")
        comps = []
        for ax in range(1, len(self.steps)):
            v = np.diff(self.values, axis=ax) / self.steps[ax]
            for other in range(len(self.steps)):
                if other != ax:
                    n = v.shape[other]
                    v = 0.5 * (np.take(v, range(0, n - 1), axis=other) + np.take(v, range(1, n), axis=other))
            comps.append(v)
        return np.stack(comps, axis=-1)

    def cell_volume(self) -> float:
        return float(np.prod(self.steps))

    def integrate(self, fn=None) -> float:
        """Midpoint quadrature of fn(values, t, x) (or of the values themselves)."""
        v, t, x = self.cell_values()
        g = v if fn is None else fn(v, t, x)
        return float(np.sum(g) * self.cell_volume())

    # algebra --------------------------------------------------------------
    def like(self, values, **kw) -> "GridField":
        opts = dict(steps=self.steps, origin=self.origin, centering=self.centering, vector=self.vector)
        opts.update(kw)
        return GridField(values, **opts)

    def __sub__(self, other: "GridField") -> "GridField":
        self._check_same_mesh(other)
        return self.like(self.values - other.values)

    def __add__(self, other: "GridField") -> "GridField":
        self._check_same_mesh(other)
        return self.like(self.values + other.values)

    def scale(self, a: float) -> "GridField":
        return self.like(a * self.values)

    def _check_same_mesh(self, other: "GridField") -> None:
        if self.values.shape != other.values.shape or self.steps != other.steps or self.centering != other.centering:
            raise ValueError("fields live on different meshes")

    def map(self, fn) -> "GridField":
        """Apply a pointwise scalar map (for instance a truncation)."""
        return self.like(np.asarray(fn(self.values), dtype=float))

    def space_gradient(self) -> "GridField":
        """Central differences in space (one-sided at the boundary), per time slice."""
        if self.vector:
            raise ValueError("gradient of a vector field is not supported")
        comps = [np.gradient(self.values, self.steps[ax], axis=ax, edge_order=2) if self.shape[ax] > 2
                 else np.gradient(self.values, self.steps[ax], axis=ax)
                 for ax in range(1, len(self.steps))]
        return self.like(np.stack(comps, axis=-1), vector=True)


# I/O --------------------------------------------------------------------------


def write_csv(fld: GridField, path) -> None:
    """Columns: t, x1.., then value (or value1.. for vector fields)."""
    t, x = fld.coords()
    vals = fld.values.reshape(-1, fld.values.shape[-1]) if fld.vector else fld.values.reshape(-1, 1)
    cols = [t.reshape(-1, 1), x.reshape(-1, x.shape[-1]), vals]
    names = ["t"] + [f"x{i + 1}" for i in range(x.shape[-1])]
    names += [f"value{i + 1}" for i in range(vals.shape[1])] if fld.vector else ["value"]
    header = ",".join(names)
    meta = f"# steps={','.join(repr(s) for s in fld.steps)};origin={','.join(repr(o) for o in fld.origin)};centering={fld.centering}"
    with open(path, "w") as fh:
        fh.write(meta + "\n" + header + "\n")
        np.savetxt(fh, np.hstack(cols), delimiter=",", fmt="%.17g")


def read_csv(path) -> GridField:
    with open(path) as fh:
        meta = fh.readline().lstrip("# ").strip()
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    info = dict(item.split("=", 1) for item in meta.split(";"))
    steps = tuple(float(s) for s in info["steps"].split(","))
    origin = tuple(float(s) for s in info["origin"].split(","))
    n_coord = len(steps)
    coords = data[:, :n_coord]
    shape = tuple(len(np.unique(np.round(coords[:, i] / steps[i], 6))) for i in range(n_coord))
    vals = data[:, n_coord:]
    vector = header[n_coord].startswith("value1")
    values = vals.reshape(shape + ((vals.shape[1],) if vector else ()))
    return GridField(values, steps, origin, centering=info["centering"], vector=vector)


def write_binary(fld: GridField, path) -> None:
    """Header: magic, ndim, ncomp, centering flag, dims (int64), steps, origin, count; then row-major doubles."""
    n = len(fld.steps)
    ncomp = fld.values.shape[-1] if fld.vector else 0
    head = _MAGIC + struct.pack("<iii", n, ncomp, 1 if fld.centering == "cell" else 0)
    head += struct.pack(f"<{n}q", *fld.shape)
    head += struct.pack(f"<{n}d", *fld.steps) + struct.pack(f"<{n}d", *fld.origin)
    head += struct.pack("<q", fld.values.size)
    Path(path).write_bytes(head + np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def read_binary(path) -> GridField:
    buf = Path(path).read_bytes()
    if buf[:4] != _MAGIC:
        raise ValueError("not a field file")
    off = 4
    n, ncomp, cell = struct.unpack_from("<iii", buf, off)
    off += 12
    dims = struct.unpack_from(f"<{n}q", buf, off)
    off += 8 * n
    steps = struct.unpack_from(f"<{n}d", buf, off)
    off += 8 * n
    origin = struct.unpack_from(f"<{n}d", buf, off)
    off += 8 * n
    (count,) = struct.unpack_from("<q", buf, off)
    off += 8
    vals = np.frombuffer(buf, dtype="<f8", count=count, offset=off).astype(float)
    shape = tuple(dims) + ((ncomp,) if ncomp else ())
    return GridField(vals.reshape(shape), steps, origin, centering="cell" if cell else "node", vector=bool(ncomp))


def load_field(path) -> GridField:
    p = Path(path)
    if p.suffix.lower() == ".csv":
        return read_csv(p)
    return read_binary(p)
