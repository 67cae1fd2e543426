"""Passive photonic circuit synthesis and evaluation.

Two netlist families:

* ``DemuxTree`` — a binary tree of unbalanced Mach-Zehnder interferometers
  that sends each comb line to its own spatial port. Level j holds 2^(j-1)
  MZIs sharing the arm delay tau_j = pi / (2^(j-1) * delta_omega); the
  static trim phase of each node is solved so interference is fully
  constructive toward one output for every line the node receives.

* ``InterferometerMesh`` — a rectangular (Clements-style) mesh of two-mode
  Givens elements on adjacent waveguides plus a layer of output phases,
  realizing an arbitrary N x N unitary.

Conventions, fixed once and used everywhere: the 50/50 coupler is
(1/sqrt2)[[1, i], [i, 1]]; delay and trim sit on the first (upper) arm, so
one MZI contributes C @ diag(e^{i(omega tau + trim)}, 1) @ C. Routing
correctness only needs internal consistency, and the mode->port map is
always reported by ``verify_demux`` rather than assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from ._util import SPEED_OF_LIGHT
from .states import FrequencyComb, UnitaryMap, _readonly

ROUTING_TOL = 1e-9
RECONSTRUCT_TOL = 1e-9

_COUPLER = np.array([[1.0, 1.0j], [1.0j, 1.0]], dtype=complex) / np.sqrt(2.0)


class RoutingError(ValueError):
    """A comb line splits across ports instead of exiting a single one."""


# --------------------------------------------------------------------------
# demultiplexer tree
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MziNode:
    """One unbalanced MZI: arm delay plus a static trim phase."""

    level: int
    position: int
    delay: float
    trim_phase: float

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("level must be >= 1")
        if not 0 <= self.position < 2 ** (self.level - 1):
            raise ValueError("position out of range for level")
        if self.delay < 0:
            raise ValueError("delay must be nonnegative")


@dataclass(frozen=True, eq=False)
class DemuxTree:
    """Hierarchical MZI tree splitting N comb lines onto 2^levels ports."""

    comb: FrequencyComb
    levels: int
    nodes: tuple[MziNode, ...]
    dropped_ports: tuple[int, ...]

    def __post_init__(self):
        n = self.levels
        if n < 1:
            raise ValueError("tree needs at least one level")
        if not 2 ** (n - 1) < self.comb.n_modes <= 2**n:
            raise ValueError("levels inconsistent with mode count")
        if len(self.nodes) != 2**n - 1:
            raise ValueError(f"expected {2 ** n - 1} nodes, got {len(self.nodes)}")
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "dropped_ports", tuple(self.dropped_ports))
        for node in self.nodes:
            expected = np.pi / (2 ** (node.level - 1) * self.comb.delta_omega)
            if not math.isclose(node.delay, expected, rel_tol=1e-9):
                raise ValueError(
                    f"level-{node.level} delay {node.delay!r} is not "
                    f"pi/(2^(j-1) delta_omega) = {expected!r}"
                )

    @property
    def n_ports(self) -> int:
        return 2**self.levels

    def node_at(self, level: int, position: int) -> MziNode:
        # nodes are stored level-major: offset 2^(level-1) - 1 + position
        return self.nodes[2 ** (level - 1) - 1 + position]


@dataclass(frozen=True)
class RoutingReport:
    """verify_demux output: port of each comb line and worst leakage."""

    ports: tuple[int, ...]
    leakage: float


def _bit_reverse(value: int, width: int) -> int:
    out = 0
    for _ in range(width):
        out = (out << 1) | (value & 1)
        value >>= 1
    return out


def _node_transfer(phase: float) -> np.ndarray:
    """C @ diag(e^{i phase}, 1) @ C for one MZI."""
    inner = np.diag([np.exp(1j * phase), 1.0])
    return _COUPLER @ inner @ _COUPLER


def _level_delay(level: int, delta_omega: float) -> float:
    return np.pi / (2 ** (level - 1) * delta_omega)


def synthesize_demux(comb: FrequencyComb, trim_solver: str = "constructive") -> DemuxTree:
    """Build the MZI tree that sends each comb line to a distinct port.

    ``trim_solver='constructive'`` places each node's trim in closed form:
    the node at level j receives the lines with a fixed residue r of
    k mod 2^(j-1), whose phases omega_k * tau_j differ by exact multiples
    of pi, so trim = pi - (omega0 + r*delta_omega)*tau_j pins every line
    onto a definite arm. ``trim_solver='numeric'`` instead runs a per-node
    1-D search maximizing routing contrast; it exists to guard the closed
    form against convention drift and must yield an equally clean routing.

    When N < 2^levels the unused outputs are listed in ``dropped_ports``.
    """
    n_modes = comb.n_modes
    if n_modes < 2:
        raise ValueError("demultiplexing needs at least 2 modes")
    if trim_solver not in ("constructive", "numeric"):
        raise ValueError(f"unknown trim solver {trim_solver!r}")
    levels = math.ceil(math.log2(n_modes))

    if trim_solver == "constructive":
        nodes = []
        for level in range(1, levels + 1):
            tau = _level_delay(level, comb.delta_omega)
            for position in range(2 ** (level - 1)):
                residue = _bit_reverse(position, level - 1)
                trim = (np.pi - (comb.omega0 + residue * comb.delta_omega) * tau) % (
                    2 * np.pi
                )
                nodes.append(MziNode(level, position, tau, trim))
    else:
        nodes = _solve_trims_numeric(comb, levels)

    routed_ports = _ideal_ports(nodes, levels, comb)
    dropped = tuple(sorted(set(range(2**levels)) - set(routed_ports)))
    return DemuxTree(comb, levels, tuple(nodes), dropped)


def _ideal_ports(nodes, levels, comb) -> list[int]:
    """Trace each comb line through the tree by per-node argmax."""
    by_level = {}
    for node in nodes:
        by_level[(node.level, node.position)] = node
    ports = []
    for k in range(comb.n_modes):
        omega = comb.omega0 + k * comb.delta_omega
        position = 0
        arm = 0
        for level in range(1, levels + 1):
            node = by_level[(level, position)]
            t = _node_transfer(omega * node.delay + node.trim_phase)
            arm = int(np.argmax(np.abs(t[:, 0])))
            position = 2 * position + arm if level < levels else position
        ports.append(2 * position + arm)
    return ports


def _solve_trims_numeric(comb: FrequencyComb, levels: int) -> list[MziNode]:
    """Per-node trim search: maximize how cleanly each line picks one arm."""
    omegas = comb.frequencies
    # lines currently entering each node, seeded with all lines at the root
    incoming = {(1, 0): list(range(comb.n_modes))}
    nodes = []
    for level in range(1, levels + 1):
        tau = _level_delay(level, comb.delta_omega)
        for position in range(2 ** (level - 1)):
            lines = incoming.get((level, position), [])
            trim = _best_trim(omegas[lines] * tau) if lines else 0.0
            nodes.append(MziNode(level, position, tau, trim))
            if level == levels:
                continue
            for k in lines:
                t = _node_transfer(omegas[k] * tau + trim)
                arm = int(np.argmax(np.abs(t[:, 0])))
                incoming.setdefault((level + 1, 2 * position + arm), []).append(k)
    return nodes


def _best_trim(base_phases: np.ndarray) -> float:
    """1-D search for the trim putting every phase at a multiple of pi."""

    def contrast_deficit(trim: float) -> float:
        phases = base_phases + trim
        bar = np.sin(phases / 2.0) ** 2
        return float(np.sum(np.minimum(bar, 1.0 - bar)))

    grid = np.linspace(0.0, 2 * np.pi, 720, endpoint=False)
    coarse = min(grid, key=contrast_deficit)
    step = grid[1] - grid[0]
    res = minimize_scalar(
        contrast_deficit,
        bounds=(coarse - step, coarse + step),
        method="bounded",
        options={"xatol": 1e-13},
    )
    return float(res.x % (2 * np.pi))


def demux_transfer_matrix(tree: DemuxTree, omega: float) -> np.ndarray:
    """Full 2^n x 2^n input->output amplitude map at frequency omega.

    Waveguide w of node (j, p) convention: the node couples waveguides
    a = p * 2^(n-j+1) and b = a + 2^(n-j), whose outputs feed the inputs
    of children (j+1, 2p) and (j+1, 2p+1). The circuit input is
    waveguide 0; the result is unitary at every omega.
    """
    n = tree.levels
    size = 2**n
    total = np.eye(size, dtype=complex)
    for level in range(1, n + 1):
        layer = np.eye(size, dtype=complex)
        for position in range(2 ** (level - 1)):
            node = tree.node_at(level, position)
            t = _node_transfer(omega * node.delay + node.trim_phase)
            a = position * 2 ** (n - level + 1)
            b = a + 2 ** (n - level)
            layer[a, a], layer[a, b] = t[0, 0], t[0, 1]
            layer[b, a], layer[b, b] = t[1, 0], t[1, 1]
        total = layer @ total
    return total


def verify_demux(tree: DemuxTree) -> RoutingReport:
    """Evaluate the tree at every comb line and check one-port routing.

    Raises ``RoutingError`` unless each line lands on a unique port with
    squared magnitude >= 1 - 1e-9. Reports the worst off-port power seen.
    """
    ports = []
    leakage = 0.0
    for k in range(tree.comb.n_modes):
        omega = tree.comb.omega0 + k * tree.comb.delta_omega
        amps = demux_transfer_matrix(tree, omega)[:, 0]
        powers = np.abs(amps) ** 2
        port = int(np.argmax(powers))
        if powers[port] < 1.0 - ROUTING_TOL:
            raise RoutingError(
                f"comb line {k} splits across ports (best port {port} carries "
                f"{powers[port]:.12f}); trim solution is inconsistent"
            )
        off = np.delete(powers, port)
        leakage = max(leakage, float(off.max()) if off.size else 0.0)
        ports.append(port)
    if len(set(ports)) != len(ports):
        raise RoutingError(f"mode->port map is not injective: {ports}")
    return RoutingReport(tuple(ports), leakage)


def phase_shifter_length(group_index: float, delta_omega: float) -> float:
    """Waveguide length 2*pi*c / (n_g * delta_omega) for a 2*pi shifter."""
    if group_index <= 0 or delta_omega <= 0:
        raise ValueError("group index and delta_omega must be positive")
    return 2 * np.pi * SPEED_OF_LIGHT / (group_index * delta_omega)


# --------------------------------------------------------------------------
# rectangular mesh decomposition
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MeshElement:
    """Givens element on adjacent modes (p, p+1): mixing theta, phase phi."""

    p: int
    theta: float
    phi: float


@dataclass(frozen=True, eq=False)
class InterferometerMesh:
    """Layered two-mode elements plus output phases; product is unitary."""

    n_modes: int
    layers: tuple[MeshElement, ...]
    output_phases: np.ndarray

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("mesh needs at least one mode")
        object.__setattr__(self, "layers", tuple(self.layers))
        phases = np.array(self.output_phases, dtype=float)
        if phases.shape != (self.n_modes,):
            raise ValueError("output_phases must have one entry per mode")
        object.__setattr__(self, "output_phases", _readonly(phases))
        for el in self.layers:
            if not 0 <= el.p < self.n_modes - 1:
                raise ValueError(f"element acts outside the mesh: p={el.p}")


def _element_block(theta: float, phi: float) -> np.ndarray:
    return np.array(
        [
            [np.exp(1j * phi) * np.cos(theta), -np.sin(theta)],
            [np.exp(1j * phi) * np.sin(theta), np.cos(theta)],
        ],
        dtype=complex,
    )


def reconstruct_mesh(mesh: InterferometerMesh) -> UnitaryMap:
    """Multiply the elements in application order, then the phase layer."""
    u = np.eye(mesh.n_modes, dtype=complex)
    for el in mesh.layers:
        block = _element_block(el.theta, el.phi)
        u[el.p : el.p + 2, :] = block @ u[el.p : el.p + 2, :]
    u = np.exp(1j * mesh.output_phases)[:, None] * u
    return UnitaryMap(u)


def decompose_unitary(u: UnitaryMap | np.ndarray) -> InterferometerMesh:
    """Rectangular (Clements-style) decomposition of a unitary.

    Lower-triangle entries are nulled diagonal by diagonal, alternating
    column mixes (applied from the right) and row mixes (from the left);
    the leftover left factors are then commuted through the residual
    diagonal so every phase ends up in the output layer. The returned
    layer list is in application order and reconstructs the input within
    Frobenius norm 1e-9.
    """
    matrix = u.matrix if isinstance(u, UnitaryMap) else np.asarray(u, dtype=complex)
    n = matrix.shape[0]
    if matrix.shape != (n, n):
        raise ValueError("unitary must be square")
    dev = np.linalg.norm(matrix @ matrix.conj().T - np.eye(n))
    if dev > 1e-8:
        raise ValueError(f"input is not unitary: ||U U+ - I||_F = {dev:.3e}")

    v = matrix.astype(complex, copy=True)
    right_ops: list[MeshElement] = []  # V <- V @ T^{-1}(p, theta, phi)
    left_ops: list[MeshElement] = []  # V <- T(p, theta, phi) @ V
    for i in range(1, n):
        if i % 2 == 1:
            for j in range(i):
                r, c = n - 1 - j, i - 1 - j
                theta, phi = _null_with_columns(v, r, c)
                block = _element_block(theta, phi).conj().T
                v[:, c : c + 2] = v[:, c : c + 2] @ block
                right_ops.append(MeshElement(c, theta, phi))
        else:
            for j in range(1, i + 1):
                r, c = n + j - i - 1, j - 1
                theta, phi = _null_with_rows(v, r, c)
                block = _element_block(theta, phi)
                v[r - 1 : r + 1, :] = block @ v[r - 1 : r + 1, :]
                left_ops.append(MeshElement(r - 1, theta, phi))

    residual = np.abs(v - np.diag(np.diag(v))).max() if n > 1 else 0.0
    if residual > 1e-9:
        raise RuntimeError(f"decomposition failed, off-diagonal residue {residual:.3e}")

    # v now satisfies  L_q..L_1 @ U @ Ti_1..Ti_p = D, i.e.
    # U = Ti(L_1)..Ti(L_q) @ D @ T(R_p)..T(R_1).  Push each leftover
    # inverse through D via  T^{-1}(theta, phi) D(alpha, beta)
    #   = D(beta - phi + pi, beta) T(theta, alpha - beta + pi)
    # so that all phases accumulate in the diagonal.
    lam = np.angle(np.diag(v))
    pushed: list[MeshElement] = []
    for el in reversed(left_ops):
        alpha, beta = lam[el.p], lam[el.p + 1]
        if el.theta == 0.0:
            # T^{-1}(0, phi) is diagonal and commutes straight into D
            lam[el.p] = alpha - el.phi
            pushed.append(MeshElement(el.p, 0.0, 0.0))
            continue
        lam[el.p] = beta - el.phi + np.pi
        lam[el.p + 1] = beta
        pushed.append(MeshElement(el.p, el.theta, alpha - beta + np.pi))

    layers = right_ops + pushed
    layers = [MeshElement(el.p, el.theta, float(el.phi % (2 * np.pi))) for el in layers]
    return InterferometerMesh(n, tuple(layers), np.mod(lam, 2 * np.pi))


def _null_with_columns(v: np.ndarray, r: int, c: int) -> tuple[float, float]:
    """Parameters so (V @ T^{-1} on columns c, c+1) zeroes V[r, c]."""
    a, b = v[r, c], v[r, c + 1]
    if abs(a) < 1e-14:
        return 0.0, 0.0
    if abs(b) < 1e-14:
        return np.pi / 2, 0.0
    theta = np.arctan2(abs(a), abs(b))
    phi = float(np.angle(a) - np.angle(b))
    return float(theta), phi


def _null_with_rows(v: np.ndarray, r: int, c: int) -> tuple[float, float]:
    """Parameters so (T on rows r-1, r @ V) zeroes V[r, c]."""
    a, b = v[r - 1, c], v[r, c]
    if abs(b) < 1e-14:
        return 0.0, 0.0
    if abs(a) < 1e-14:
        return np.pi / 2, 0.0
    theta = np.arctan2(abs(b), abs(a))
    phi = float(np.angle(b) - np.angle(a) + np.pi)
    return float(theta), phi


# --------------------------------------------------------------------------
# netlist serialization
# --------------------------------------------------------------------------


def netlist_to_dict(obj: DemuxTree | InterferometerMesh) -> dict:
    """JSON-ready netlist record; round-trips losslessly."""
    if isinstance(obj, DemuxTree):
        return {
            "kind": "demux_tree",
            "n_modes": obj.comb.n_modes,
            "comb": obj.comb.to_dict(),
            "levels": obj.levels,
            "nodes": [
                {
                    "level": n.level,
                    "position": n.position,
                    "delay_s": n.delay,
                    "trim_rad": n.trim_phase,
                }
                for n in obj.nodes
            ],
            "dropped_ports": list(obj.dropped_ports),
        }
    if isinstance(obj, InterferometerMesh):
        return {
            "kind": "mesh",
            "n_modes": obj.n_modes,
            "layers": [
                {"p": el.p, "theta_rad": el.theta, "phi_rad": el.phi}
                for el in obj.layers
            ],
            "output_phases_rad": list(map(float, obj.output_phases)),
        }
    raise TypeError(f"not a netlist object: {type(obj)!r}")


def netlist_from_dict(d: dict) -> DemuxTree | InterferometerMesh:
    kind = d.get("kind")
    if kind == "demux_tree":
        comb = FrequencyComb.from_dict(d["comb"])
        nodes = tuple(
            MziNode(n["level"], n["position"], n["delay_s"], n["trim_rad"])
            for n in d["nodes"]
        )
        return DemuxTree(comb, d["levels"], nodes, tuple(d["dropped_ports"]))
    if kind == "mesh":
        layers = tuple(
            MeshElement(el["p"], el["theta_rad"], el["phi_rad"]) for el in d["layers"]
        )
        return InterferometerMesh(d["n_modes"], layers, np.array(d["output_phases_rad"]))
    raise ValueError(f"unknown netlist kind {kind!r}")
