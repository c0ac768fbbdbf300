"""Grids and field containers: scalar fields, vector fields, k-forms and
symmetric 2-tensors sampled on the flat torus T^n = R^n/(2*pi*Z)^n.

Values are stored nodally (shape ``(N,)*n`` per scalar component) and are
immutable after construction.  Component ordering follows the increasing
multi-index convention, e.g. on T^3 a 2-form is stored as the coefficients
of dx1^dx2, dx1^dx3, dx2^dx3 in that order.
"""

from __future__ import annotations

import io
import json
import math
from itertools import combinations

import numpy as np

from .spectral import kit_for

__all__ = [
    "TorusGrid", "ScalarField", "VectorField", "KForm", "SymTensor2",
    "FourierModeSpec", "Mode", "make_grid", "sample", "index_sets",
    "field_to_csv",
]


def index_sets(n, k):
    """Increasing multi-indices of length k drawn from 0..n-1."""
    return tuple(combinations(range(n), k))


def sym_index_pairs(n):
    return tuple((i, j) for i in range(n) for j in range(i, n))


def n_components(n, k):
    return math.comb(n, k)


class TorusGrid:
    """Uniform periodic grid on T^n with N samples per axis.

    The period is fixed at 2*pi per axis; nodes sit at x_j = 2*pi*j/N.
    """

    def __init__(self, n, N):
        if n not in (2, 3):
            raise ValueError(f"unsupported dimension n={n}; need n in {{2, 3}}")
        if N % 2 != 0:
            raise ValueError(f"resolution N={N} must be even")
        if N < 8:
            raise ValueError(f"resolution N={N} too small; need N >= 8")
        self.n = n
        self.N = N
        self.kit = kit_for(n, N)
        axes = [2.0 * np.pi * np.arange(N) / N for _ in range(n)]
        self.coords = np.meshgrid(*axes, indexing="ij")
        for c in self.coords:
            c.flags.writeable = False

    @property
    def shape(self):
        return (self.N,) * self.n

    @property
    def node_count(self):
        return self.N ** self.n

    @property
    def volume(self):
        return (2.0 * np.pi) ** self.n

    def __eq__(self, other):
        return isinstance(other, TorusGrid) and (self.n, self.N) == (other.n, other.N)

    def __hash__(self):
        return hash((self.n, self.N))

    def __repr__(self):
        return f"TorusGrid(n={self.n}, N={self.N})"


def make_grid(n, N):
    """Build a TorusGrid, rejecting odd N, N < 8 and unsupported n."""
    return TorusGrid(n, N)


def _freeze(arr, shape):
    a = np.ascontiguousarray(arr, dtype=float)
    if a.shape != shape:
        raise ValueError(f"component array has shape {a.shape}, expected {shape}")
    a.flags.writeable = False
    return a


class _Field:
    """Shared arithmetic for nodal field containers."""

    __slots__ = ("grid", "comps", "_pad")

    def _like(self, comps):
        raise NotImplementedError

    def padded(self):
        """Values resampled on the dealiasing grid, cached (fields are
        immutable, so a concurrent double computation is benign)."""
        pad = getattr(self, "_pad", None)
        if pad is None:
            pad = self.grid.kit.pad(self.comps)
            pad.flags.writeable = False
            self._pad = pad
        return pad

    def __add__(self, other):
        self._check_same(other)
        return self._like(self.comps + other.comps)

    def __sub__(self, other):
        self._check_same(other)
        return self._like(self.comps - other.comps)

    def __neg__(self):
        return self._like(-self.comps)

    def __mul__(self, c):
        return self._like(self.comps * float(c))

    __rmul__ = __mul__

    def _check_same(self, other):
        if type(other) is not type(self) or other.grid != self.grid:
            raise ValueError("grid/kind mismatch between fields")
        if getattr(other, "degree", None) != getattr(self, "degree", None):
            raise ValueError("degree mismatch between forms")

    def norm(self):
        """Flat discrete L2 norm (auxiliary metric), summed over components."""
        sq = np.mean(self.comps ** 2, axis=self.grid.kit.axes)
        return float(np.sqrt(np.sum(sq) * self.grid.volume))

    def max_abs(self):
        return float(np.max(np.abs(self.comps))) if self.comps.size else 0.0

    def allclose(self, other, tol=1e-10):
        self._check_same(other)
        scale = max(self.max_abs(), other.max_abs(), 1.0)
        return float(np.max(np.abs(self.comps - other.comps), initial=0.0)) <= tol * scale


class ScalarField(_Field):
    """Real function on the grid."""

    __slots__ = ()

    def __init__(self, grid, values):
        self.grid = grid
        self.comps = _freeze(np.asarray(values)[None, ...], (1,) + grid.shape)

    @property
    def values(self):
        return self.comps[0]

    def _like(self, comps):
        return ScalarField(self.grid, comps[0])

    @classmethod
    def zero(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.shape, float(c)))

    def mean(self):
        return float(np.mean(self.values))

    def to_form(self):
        return KForm(self.grid, 0, self.comps)


class VectorField(_Field):
    """Vector field, components in the coordinate frame d/dx_i."""

    __slots__ = ()

    def __init__(self, grid, comps):
        self.grid = grid
        self.comps = _freeze(comps, (grid.n,) + grid.shape)

    def _like(self, comps):
        return VectorField(self.grid, comps)

    @classmethod
    def zero(cls, grid):
        return cls(grid, np.zeros((grid.n,) + grid.shape))

    @classmethod
    def frame(cls, grid, i):
        c = np.zeros((grid.n,) + grid.shape)
        c[i] = 1.0
        return cls(grid, c)

    def component(self, i):
        return ScalarField(self.grid, self.comps[i])


class KForm(_Field):
    """Differential k-form; comps[i] multiplies dx_I for I = index_sets(n,k)[i]."""

    __slots__ = ("degree",)

    def __init__(self, grid, degree, comps):
        if not 0 <= degree <= grid.n:
            raise ValueError(f"degree {degree} out of range for n={grid.n}")
        self.grid = grid
        self.degree = degree
        self.comps = _freeze(comps, (n_components(grid.n, degree),) + grid.shape)

    def _like(self, comps):
        return KForm(self.grid, self.degree, comps)

    @property
    def indices(self):
        return index_sets(self.grid.n, self.degree)

    @classmethod
    def zero(cls, grid, degree):
        return cls(grid, degree, np.zeros((n_components(grid.n, degree),) + grid.shape))

    @classmethod
    def constant(cls, grid, degree, coeffs):
        comps = np.broadcast_to(
            np.asarray(coeffs, dtype=float).reshape((-1,) + (1,) * grid.n),
            (n_components(grid.n, degree),) + grid.shape,
        ).copy()
        return cls(grid, degree, comps)

    def to_scalar(self):
        if self.degree != 0:
            raise ValueError("only a 0-form converts to a scalar field")
        return ScalarField(self.grid, self.comps[0])

    def component(self, idx):
        """Coefficient of dx_idx as a ScalarField (idx an increasing tuple)."""
        return ScalarField(self.grid, self.comps[self.indices.index(tuple(idx))])


class SymTensor2(_Field):
    """Symmetric 2-tensor, components g_ij stored for i <= j."""

    __slots__ = ()

    def __init__(self, grid, comps):
        self.grid = grid
        m = grid.n * (grid.n + 1) // 2
        self.comps = _freeze(comps, (m,) + grid.shape)

    def _like(self, comps):
        return SymTensor2(self.grid, comps)

    @property
    def index_pairs(self):
        return sym_index_pairs(self.grid.n)

    @classmethod
    def zero(cls, grid):
        m = grid.n * (grid.n + 1) // 2
        return cls(grid, np.zeros((m,) + grid.shape))

    @classmethod
    def flat(cls, grid):
        """The auxiliary flat metric: identity coefficients."""
        m = grid.n * (grid.n + 1) // 2
        comps = np.zeros((m,) + grid.shape)
        for a, (i, j) in enumerate(sym_index_pairs(grid.n)):
            if i == j:
                comps[a] = 1.0
        return cls(grid, comps)

    def full_matrix(self):
        """Dense pointwise matrix, shape (n, n) + grid.shape."""
        n = self.grid.n
        g = np.zeros((n, n) + self.grid.shape)
        for a, (i, j) in enumerate(self.index_pairs):
            g[i, j] = self.comps[a]
            g[j, i] = self.comps[a]
        return g

    @classmethod
    def from_full_matrix(cls, grid, g):
        comps = np.stack([g[i, j] for (i, j) in sym_index_pairs(grid.n)])
        return cls(grid, comps)

    def is_positive_definite(self, tol=1e-12):
        g = np.moveaxis(self.full_matrix(), (0, 1), (-2, -1))
        try:
            np.linalg.cholesky(g + 0.0)
        except np.linalg.LinAlgError:
            return False
        eig = np.linalg.eigvalsh(g)
        return bool(np.min(eig) > tol)


# ---------------------------------------------------------------------------
# Fourier mode specifications (test-input construction and serialization)
# ---------------------------------------------------------------------------

class Mode:
    """One trigonometric mode: amplitude*cos(<k,x> + phase) on a component."""

    __slots__ = ("component", "wavevector", "amplitude", "phase")

    def __init__(self, component, wavevector, amplitude, phase=0.0):
        self.component = tuple(int(c) for c in component)
        self.wavevector = tuple(int(k) for k in wavevector)
        self.amplitude = float(amplitude)
        self.phase = float(phase)

    def to_json(self):
        return {
            "component": list(self.component),
            "wavevector": list(self.wavevector),
            "amplitude": self.amplitude,
            "phase": self.phase,
        }

    @classmethod
    def from_json(cls, d):
        return cls(d["component"], d["wavevector"], d["amplitude"], d.get("phase", 0.0))


class FourierModeSpec:
    """Band-limited trigonometric description of a k-form."""

    def __init__(self, degree, modes):
        self.degree = int(degree)
        self.modes = list(modes)

    def to_json(self):
        return {"degree": self.degree, "modes": [m.to_json() for m in self.modes]}

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, d):
        return cls(d["degree"], [Mode.from_json(m) for m in d["modes"]])

    @classmethod
    def loads(cls, s):
        return cls.from_json(json.loads(s))


def sample(spec, grid):
    """Evaluate a FourierModeSpec on a grid, returning a KForm.

    Rejects aliased wavevectors (any |k_i| > N/2 - 1) and bad degrees.
    """
    k = spec.degree
    if not 0 <= k <= grid.n:
        raise ValueError(f"degree {k} out of range for n={grid.n}")
    sets = index_sets(grid.n, k)
    comps = np.zeros((len(sets),) + grid.shape)
    bound = grid.N // 2 - 1
    for m in spec.modes:
        if len(m.wavevector) != grid.n:
            raise ValueError(f"wavevector {m.wavevector} has wrong length")
        if any(abs(ki) > bound for ki in m.wavevector):
            raise ValueError(
                f"aliased wavevector {m.wavevector}: need |k_i| <= {bound} at N={grid.N}")
        comp = tuple(m.component)
        if comp not in sets:
            raise ValueError(f"component {comp} invalid for degree {k} on T^{grid.n}")
        phase = sum(ki * x for ki, x in zip(m.wavevector, grid.coords)) + m.phase
        comps[sets.index(comp)] += m.amplitude * np.cos(phase)
    return KForm(grid, k, comps)


# ---------------------------------------------------------------------------
# CSV export (plotting interface)
# ---------------------------------------------------------------------------

def component_labels(field):
    if isinstance(field, ScalarField):
        return ["value"]
    if isinstance(field, VectorField):
        return [f"e{i+1}" for i in range(field.grid.n)]
    if isinstance(field, KForm):
        if field.degree == 0:
            return ["value"]
        return ["dx" + "^dx".join(str(i + 1) for i in I) for I in field.indices]
    if isinstance(field, SymTensor2):
        return [f"g{i+1}{j+1}" for (i, j) in field.index_pairs]
    raise TypeError(f"unsupported field type {type(field)!r}")


def field_to_csv(field, path_or_buf):
    """Write node coordinates and component values as CSV."""
    grid = field.grid
    labels = component_labels(field)
    header = ",".join([f"x{i+1}" for i in range(grid.n)] + labels)
    coords = np.stack([c.ravel() for c in grid.coords])
    data = field.comps.reshape(field.comps.shape[0], -1)
    rows = np.vstack([coords, data]).T
    if isinstance(path_or_buf, (str, bytes)):
        buf = open(path_or_buf, "w")
        close = True
    else:
        buf, close = path_or_buf, False
    try:
        buf.write(header + "\n")
        for row in rows:
            buf.write(",".join(format(v, ".17g") for v in row) + "\n")
    finally:
        if close:
            buf.close()
