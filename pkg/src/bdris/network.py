"""BD-RIS admittance-network assembly and the admittance-to-scattering map.

The surface is an M-port reconfigurable admittance network partitioned into
G groups of size group_size.  Within a group every port pair is joined by a
tunable susceptance (group-connected) or only adjacent ports are (forest-
connected, a tridiagonal pattern).  Component susceptances are set at the
center frequency and drift with frequency per the fitted affine model, so
each subcarrier sees its own purely imaginary, symmetric, block-diagonal
admittance matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuit import LinearSusceptanceModel

GROUP = "group"
FOREST = "forest"

# Bound tolerance when validating center susceptances, relative to the box width.
BOX_TOL = 1e-12

# Condition-number ceiling above which (y0*I + Y) is treated as singular.
COND_CEILING = 1e12


class SingularNetworkError(ValueError):
    """(y0*I + Y) is numerically singular; scattering map undefined."""


class ConstraintViolation(ValueError):
    """Center susceptances fall outside the tunable range."""


@dataclass(frozen=True)
class RisTopology:
    """Architecture descriptor: group- or forest-connected, M elements in groups.

    variables_per_group is group_size*(group_size+1)/2 for the group
    architecture (one component per port pair plus self components) and
    2*group_size - 1 for the forest architecture (diagonal plus one
    off-diagonal chain).  group_size = 1 is the conventional diagonal RIS
    in both cases.
    """

    architecture: str
    elements: int
    group_size: int

    def __post_init__(self):
        if self.architecture not in (GROUP, FOREST):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if self.elements < 1 or self.elements % self.group_size != 0:
            raise ValueError(
                f"group_size {self.group_size} must divide elements {self.elements}"
            )

    @property
    def group_count(self) -> int:
        return self.elements // self.group_size

    @property
    def variables_per_group(self) -> int:
        if self.architecture == GROUP:
            return self.group_size * (self.group_size + 1) // 2
        return 2 * self.group_size - 1

    @property
    def variable_count(self) -> int:
        return self.variables_per_group * self.group_count


@dataclass(frozen=True)
class QuantizedSet:
    """Uniform susceptance codebook with 2**bits levels from b_min to b_max."""

    bits: int
    b_min: float
    b_max: float

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("bits must be >= 1")
        if not self.b_min < self.b_max:
            raise ValueError("quantized set requires b_min < b_max")

    @property
    def levels(self) -> np.ndarray:
        return np.linspace(self.b_min, self.b_max, 2**self.bits)


@dataclass(frozen=True)
class AdmittanceMatrixSet:
    """Per-subcarrier admittance matrices of the assembled surface.

    y has shape (N, M, M); every slice is purely imaginary, symmetric and
    block-diagonal with group_count blocks of size group_size.
    """

    y: np.ndarray
    y0: float
    topology: RisTopology = field(repr=False)

    def blocks(self) -> np.ndarray:
        """Diagonal blocks as an array of shape (N, G, group_size, group_size)."""
        n, m, _ = self.y.shape
        g = self.topology.group_count
        mb = self.topology.group_size
        r = self.y.reshape(n, g, mb, g, mb)
        return r[:, np.arange(g), :, np.arange(g), :].transpose(1, 0, 2, 3)


def duplication_matrix(group_size: int) -> np.ndarray:
    """Binary map from the packed lower triangle to the column-major vec.

    Packing runs down the lower triangle column by column: for group_size 3
    the packed order is (1,1),(2,1),(3,1),(2,2),(3,2),(3,3).
    """
    mb = group_size
    n_packed = mb * (mb + 1) // 2
    p = np.zeros((mb * mb, n_packed))
    for col in range(mb):
        for row in range(mb):
            r, c = max(row, col), min(row, col)
            packed = c * mb - c * (c - 1) // 2 + (r - c)
            p[col * mb + row, packed] = 1.0
    return p


def expand_group(b_group: np.ndarray, group_size: int) -> np.ndarray:
    """Symmetric matrix whose packed lower triangle (column-major) is b_group."""
    b_group = np.asarray(b_group, dtype=float)
    expected = group_size * (group_size + 1) // 2
    if b_group.shape != (expected,):
        raise ValueError(f"packed vector must have length {expected}")
    vec = duplication_matrix(group_size) @ b_group
    return vec.reshape(group_size, group_size, order="F")


def expand_forest(b_group: np.ndarray, group_size: int) -> np.ndarray:
    """Symmetric tridiagonal matrix: diagonal first, then the off-diagonal chain."""
    b_group = np.asarray(b_group, dtype=float)
    expected = 2 * group_size - 1
    if b_group.shape != (expected,):
        raise ValueError(f"packed vector must have length {expected}")
    out = np.diag(b_group[:group_size])
    off = b_group[group_size:]
    for i, v in enumerate(off):
        out[i, i + 1] = v
        out[i + 1, i] = v
    return out


def component_matrix_to_port_matrix(b_bar: np.ndarray) -> np.ndarray:
    """Nodal assembly of component susceptances into the port matrix.

    Off-diagonal entries are the negated inter-port components; each
    diagonal entry is the sum of all components touching that port, so the
    row sums of the result recover the self components.
    """
    b_bar = np.asarray(b_bar, dtype=float)
    out = -b_bar.copy()
    np.fill_diagonal(out, b_bar.sum(axis=1))
    return out


def port_map_tensor(topology: RisTopology) -> np.ndarray:
    """Linear map T with B_port = sum_l T[:, :, l] * b_packed[l] for one group."""
    mb = topology.group_size
    n_vars = topology.variables_per_group
    expand = expand_group if topology.architecture == GROUP else expand_forest
    t = np.empty((mb, mb, n_vars))
    for l in range(n_vars):
        unit = np.zeros(n_vars)
        unit[l] = 1.0
        t[:, :, l] = component_matrix_to_port_matrix(expand(unit, mb))
    return t


def validate_center_susceptances(
    topology: RisTopology,
    values: np.ndarray,
    model: LinearSusceptanceModel,
    quantized: QuantizedSet | None = None,
) -> np.ndarray:
    """Check the packed decision vector against topology and tunable range."""
    values = np.asarray(values, dtype=float)
    if values.shape != (topology.variable_count,):
        raise ConstraintViolation(
            f"expected {topology.variable_count} susceptances, got {values.shape}"
        )
    lo, hi = model.susceptance_min, model.susceptance_max
    tol = BOX_TOL * (hi - lo)
    bad = np.flatnonzero((values < lo - tol) | (values > hi + tol))
    if bad.size:
        raise ConstraintViolation(
            f"susceptances out of [{lo:.6e}, {hi:.6e}] at indices {bad.tolist()}"
        )
    if quantized is not None:
        dist = np.min(np.abs(values[:, None] - quantized.levels[None, :]), axis=1)
        off = np.flatnonzero(dist > tol)
        if off.size:
            raise ConstraintViolation(
                f"susceptances not on the {2**quantized.bits}-level grid at indices "
                f"{off.tolist()}"
            )
    return values


def group_port_susceptances(
    topology: RisTopology,
    values: np.ndarray,
    model: LinearSusceptanceModel,
    omegas: np.ndarray,
) -> np.ndarray:
    """Per-subcarrier, per-group port susceptance blocks, shape (N, G, mb, mb).

    Every packed component follows the same affine drift
    b(omega) = F1(omega)*b_c + F2(omega) before nodal assembly.
    """
    t = port_map_tensor(topology)
    grouped = np.asarray(values, dtype=float).reshape(
        topology.group_count, topology.variables_per_group
    )
    base = np.einsum("ijl,gl->gij", t, grouped)
    drift = t.sum(axis=2)
    f1 = model.f1(omegas)
    f2 = model.f2(omegas)
    return (
        f1[:, None, None, None] * base[None, :, :, :]
        + f2[:, None, None, None] * drift[None, None, :, :]
    )


def assemble_admittance_set(
    topology: RisTopology,
    values: np.ndarray,
    model: LinearSusceptanceModel,
    omegas: np.ndarray,
    y0: float = 0.02,
    quantized: QuantizedSet | None = None,
) -> AdmittanceMatrixSet:
    """Assemble Y_n = j * blkdiag(B_1n, ..., B_Gn) for every subcarrier."""
    values = validate_center_susceptances(topology, values, model, quantized)
    omegas = np.asarray(omegas, dtype=float)
    blocks = group_port_susceptances(topology, values, model, omegas)
    n = omegas.size
    m = topology.elements
    mb = topology.group_size
    y = np.zeros((n, m, m), dtype=complex)
    for g in range(topology.group_count):
        sl = slice(g * mb, (g + 1) * mb)
        y[:, sl, sl] = 1j * blocks[:, g]
    return AdmittanceMatrixSet(y=y, y0=y0, topology=topology)


def scattering_from_admittance(
    y: np.ndarray, y0: float, cond_ceiling: float = COND_CEILING
) -> np.ndarray:
    """Scattering matrix (y0*I + Y)^-1 (y0*I - Y) of an admittance matrix.

    Unitary and symmetric whenever Y is purely imaginary and symmetric
    (lossless reciprocal network).  Works on a single matrix or a stack.
    """
    y = np.asarray(y, dtype=complex)
    eye = np.eye(y.shape[-1])
    a = y0 * eye + y
    if np.max(np.linalg.cond(a)) > cond_ceiling:
        raise SingularNetworkError("y0*I + Y is numerically singular")
    return np.linalg.solve(a, y0 * eye - y)
