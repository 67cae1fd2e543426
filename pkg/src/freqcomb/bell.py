"""CHSH and high-dimensional Bell quantities with time-resolved detection.

Measurement bases
-----------------
Photon a is projected onto time-delayed Fourier vectors

    A_k(j, t) = (1/sqrt N) exp{ i (2 pi j / N + delta_omega t) k },

photon b onto frequency-reversed conjugate Fourier vectors whose detection
time enters through free evolution of the mode amplitudes,

    B_m(j, t) = (1/sqrt N) exp{ -i 2 pi j (N-1-m) / N } exp{ i delta_omega t m },

so that shifting every detection time by a common offset only multiplies
each basis vector by a global phase and leaves every correlation
unchanged. With this pair of bases a joint click depends on the detection
time *difference* of the two photons, and a finite response time T damps
each interference term by sinc(q delta_omega T / 2) per frequency-offset
q, exactly as for single-photon effective projectors.

For N = 2 the b basis coincides (up to global phase) with the equatorial
basis (1/sqrt 2)(first-line + (-1)^j e^{i delta_omega t} second-line) used
by the CHSH functions, and the general indicator S_N reduces to a CHSH
combination of correlation coefficients.

Rule-based settings
-------------------
``optimal_settings`` returns detection times t_b - t_a = pi/(2 N
delta_omega) and primed settings shifted by ``prime_sign *
pi/(N delta_omega)``. With ``prime_sign=+1`` (the default) the shifts are
taken verbatim from the published rule; under the basis conventions above
that variant evaluates to S_2 = 0 for the maximally entangled pair, while
``prime_sign=-1`` attains the quantum optimum for every N (2*sqrt(2),
2.87293, 2.89624 for N = 2, 3, 4). The sign ambiguity is inherent to the
rule as published; searched maxima (``maximize_s2``,
``maximize_bell_sn``) are convention-independent and are what the
acceptance checks rely on.

All analytic results here are sums of sinc-damped Fourier terms built
from a single state-dependent "delta table"; the Gauss-Legendre
double-quadrature functions recompute the same quantities from explicit
basis vectors and serve as independent oracles.
"""

from __future__ import annotations

import io
import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ._util import format_float, sinc
from .states import BipartitePhotonState, FrequencyComb, SinglePhotonState

COINCIDENCE_SUM_TOL = 1e-10


@dataclass(frozen=True)
class BellSettings:
    """Detection times for the four setting pairs, plus response time."""

    t_a: float
    t_a_prime: float
    t_b: float
    t_b_prime: float
    response_time: float = 0.0

    def __post_init__(self):
        if self.response_time < 0:
            raise ValueError("response time must be nonnegative")


@dataclass(frozen=True, eq=False)
class CorrelationResult:
    """Normalized coincidence tables, correlation coefficients, and S_2."""

    setting_labels: tuple[tuple[str, str], ...]
    tables: np.ndarray  # (n_settings, 2, 2), each normalized to sum 1
    correlations: np.ndarray  # E per setting pair
    s2: float

    def __post_init__(self):
        tables = np.array(self.tables, dtype=float)
        corr = np.array(self.correlations, dtype=float)
        for tab in tables:
            if abs(tab.sum() - 1.0) > COINCIDENCE_SUM_TOL:
                raise ValueError("coincidence table does not sum to 1")
            if tab.min() < -COINCIDENCE_SUM_TOL or tab.max() > 1 + COINCIDENCE_SUM_TOL:
                raise ValueError("coincidence entries must lie in [0, 1]")
        if np.abs(corr).max() > 1 + COINCIDENCE_SUM_TOL:
            raise ValueError("|E| must not exceed 1")
        object.__setattr__(self, "tables", tables)
        object.__setattr__(self, "correlations", corr)


# --------------------------------------------------------------------------
# measurement bases
# --------------------------------------------------------------------------


def fourier_basis_vector(
    comb: FrequencyComb, j: int, t: float, party: str
) -> SinglePhotonState:
    """Projection basis vector of output port j at detection time t."""
    n = comb.n_modes
    if not 0 <= j < n:
        raise IndexError(f"output index {j} out of range for {n} ports")
    k = np.arange(n)
    if party == "a":
        amp = np.exp(1j * (2 * np.pi * j / n + comb.delta_omega * t) * k)
    elif party == "b":
        amp = np.exp(-2j * np.pi * j * (n - 1 - k) / n) * np.exp(
            1j * comb.delta_omega * t * k
        )
    else:
        raise ValueError(f"party must be 'a' or 'b', got {party!r}")
    return SinglePhotonState(comb, amp / np.sqrt(n))


def equator_basis_vector(comb: FrequencyComb, j: int, t: float) -> SinglePhotonState:
    """Two-mode equatorial vector (1/sqrt2)(line1 + (-1)^j e^{i dw t} line2)."""
    if comb.n_modes != 2:
        raise ValueError("equatorial bases are defined for 2-mode combs")
    if j not in (0, 1):
        raise IndexError("output index must be 0 or 1")
    amp = np.array([1.0, (-1.0) ** j * np.exp(1j * comb.delta_omega * t)]) / np.sqrt(2)
    return SinglePhotonState(comb, amp)


# --------------------------------------------------------------------------
# analytic machinery: the delta table
# --------------------------------------------------------------------------


_DELTA_CACHE: "weakref.WeakKeyDictionary[BipartitePhotonState, np.ndarray]" = (
    weakref.WeakKeyDictionary()
)


def _delta_table(state: BipartitePhotonState) -> np.ndarray:
    """G[da+N-1, db+N-1] = sum_{k,m} c_{km} conj(c_{k-da, m-db}).

    Every analytic quantity is a sinc-damped Fourier series with these
    coefficients; states are immutable, so the table is cached per state.
    """
    cached = _DELTA_CACHE.get(state)
    if cached is not None:
        return cached
    c = state.amplitudes
    n = c.shape[0]
    g = np.zeros((2 * n - 1, 2 * n - 1), dtype=complex)
    for da in range(-(n - 1), n):
        rows = slice(max(0, da), min(n, n + da))
        rows_shift = slice(max(0, -da), min(n, n - da))
        for db in range(-(n - 1), n):
            cols = slice(max(0, db), min(n, n + db))
            cols_shift = slice(max(0, -db), min(n, n - db))
            g[da + n - 1, db + n - 1] = np.sum(
                c[rows, cols] * np.conj(c[rows_shift, cols_shift])
            )
    g.setflags(write=False)
    _DELTA_CACHE[state] = g
    return g


def _sinc_factors(n: int, delta_omega: float, response_time: float) -> np.ndarray:
    """sinc(q delta_omega T / 2) for q = -(N-1) .. N-1."""
    q = np.arange(-(n - 1), n)
    return np.asarray(sinc(q * delta_omega * response_time / 2.0), dtype=float)


def coincidence_table(
    state: BipartitePhotonState, t_a: float, t_b: float, response_time: float
) -> np.ndarray:
    """Time-averaged joint click probabilities, one entry per port pair.

    Entry (i, j) is the window average of |<A_i(t_a), B_j(t_b)|psi>|^2; the
    full table sums to 1 by completeness of the joint basis.
    """
    n = state.comb.n_modes
    dw = state.comb.delta_omega
    g = _delta_table(state)
    s = _sinc_factors(n, dw, response_time)
    deltas = np.arange(-(n - 1), n)
    ports = np.arange(n)
    phase_a = np.exp(-2j * np.pi * np.outer(ports, deltas) / n)  # (i, da)
    phase_b = phase_a  # same root of unity for both output indices
    weights = (
        g
        * np.outer(s, s)
        * np.exp(-1j * dw * (t_a * deltas[:, None] + t_b * deltas[None, :]))
    )
    table = np.einsum("ia,jb,ab->ij", phase_a, phase_b, weights).real / n**2
    return np.clip(table, 0.0, None)


def joint_probability(
    state: BipartitePhotonState,
    t_a: float,
    t_b: float,
    k: int,
    response_time: float,
) -> float:
    """P(t_a, t_b, k): probability the port indices differ by k (mod N).

    Sums the coincidence table along the diagonal j = i + k; only delta
    pairs with da + db = 0 (mod N) survive that sum, so the result is a
    short sinc-damped Fourier series in t_a and t_b.
    """
    n = state.comb.n_modes
    dw = state.comb.delta_omega
    g = _delta_table(state)
    s = _sinc_factors(n, dw, response_time)
    k = k % n
    total = 0.0 + 0.0j
    for da in range(-(n - 1), n):
        for db in (-da - n, -da, -da + n):
            if not -(n - 1) <= db <= n - 1:
                continue
            coeff = g[da + n - 1, db + n - 1] * s[da + n - 1] * s[db + n - 1]
            if coeff == 0:
                continue
            total += (
                coeff
                * np.exp(-2j * np.pi * k * db / n)
                * np.exp(-1j * dw * (t_a * da + t_b * db))
            )
    return float(total.real) / n


def joint_probability_quadrature(
    state: BipartitePhotonState,
    t_a: float,
    t_b: float,
    k: int,
    response_time: float,
    n_points: int = 64,
) -> float:
    """Double Gauss-Legendre average of the summed instantaneous rates.

    Independent oracle: builds explicit basis vectors on a quadrature grid
    over both detection windows and never touches the sinc expansion.
    """
    n = state.comb.n_modes
    k = k % n
    if response_time == 0.0:
        times_a, times_b = np.array([t_a]), np.array([t_b])
        w = np.array([1.0])
    else:
        nodes, weights = np.polynomial.legendre.leggauss(n_points)
        times_a = t_a + nodes * response_time / 2.0
        times_b = t_b + nodes * response_time / 2.0
        w = weights / 2.0  # box measure d tau / T over each window
    total = 0.0
    c = state.amplitudes
    for l in range(n):
        va = np.array(
            [fourier_basis_vector(state.comb, l, t, "a").amplitudes for t in times_a]
        )
        vb = np.array(
            [
                fourier_basis_vector(state.comb, (l + k) % n, t, "b").amplitudes
                for t in times_b
            ]
        )
        amp = va.conj() @ c @ vb.conj().T
        total += float(np.einsum("p,q,pq->", w, w, np.abs(amp) ** 2))
    return total


# --------------------------------------------------------------------------
# CHSH (two-mode) quantities
# --------------------------------------------------------------------------


def _require_two_modes(state: BipartitePhotonState):
    if state.comb.n_modes != 2:
        raise ValueError("CHSH quantities are defined for 2-mode states")


def chsh_coincidences(
    state: BipartitePhotonState, t_a: float, t_b: float, response_time: float
) -> np.ndarray:
    """Normalized 2x2 coincidence table for one setting pair."""
    _require_two_modes(state)
    table = coincidence_table(state, t_a, t_b, response_time)
    return table / table.sum()


def chsh_coincidences_quadrature(
    state: BipartitePhotonState,
    t_a: float,
    t_b: float,
    response_time: float,
    n_points: int = 64,
) -> np.ndarray:
    """Oracle table from explicit equatorial bases and double quadrature."""
    _require_two_modes(state)
    if response_time == 0.0:
        times_a, times_b = np.array([t_a]), np.array([t_b])
        w = np.array([1.0])
    else:
        nodes, weights = np.polynomial.legendre.leggauss(n_points)
        times_a = t_a + nodes * response_time / 2.0
        times_b = t_b + nodes * response_time / 2.0
        w = weights / 2.0
    c = state.amplitudes
    table = np.zeros((2, 2))
    for i in range(2):
        va = np.array([equator_basis_vector(state.comb, i, t).amplitudes for t in times_a])
        for j in range(2):
            vb = np.array(
                [equator_basis_vector(state.comb, j, t).amplitudes for t in times_b]
            )
            amp = va.conj() @ c @ vb.conj().T
            table[i, j] = float(np.einsum("p,q,pq->", w, w, np.abs(amp) ** 2))
    return table / table.sum()


def chsh_correlation(coincidences: np.ndarray) -> float:
    """E = (C11 + C22 - C12 - C21) / (C11 + C22 + C12 + C21)."""
    c = np.asarray(coincidences, dtype=float)
    if c.shape != (2, 2):
        raise ValueError("coincidence table must be 2x2")
    total = float(c.sum())
    if total <= 0:
        raise ValueError("coincidence table sums to zero")
    return float((c[0, 0] + c[1, 1] - c[0, 1] - c[1, 0]) / total)


_SETTING_LABELS = (
    ("t_a", "t_b"),
    ("t_a", "t_b_prime"),
    ("t_a_prime", "t_b"),
    ("t_a_prime", "t_b_prime"),
)


def evaluate_chsh(state: BipartitePhotonState, settings: BellSettings) -> CorrelationResult:
    """All four setting pairs: tables, correlation coefficients, and S_2.

    S_2 = E(t_a,t_b) - E(t_a,t'_b) + E(t'_a,t_b) + E(t'_a,t'_b).
    """
    _require_two_modes(state)
    pairs = (
        (settings.t_a, settings.t_b),
        (settings.t_a, settings.t_b_prime),
        (settings.t_a_prime, settings.t_b),
        (settings.t_a_prime, settings.t_b_prime),
    )
    tables = np.array(
        [chsh_coincidences(state, ta, tb, settings.response_time) for ta, tb in pairs]
    )
    corr = np.array([chsh_correlation(tab) for tab in tables])
    s2 = float(corr[0] - corr[1] + corr[2] + corr[3])
    return CorrelationResult(_SETTING_LABELS, tables, corr, s2)


def chsh_s2(state: BipartitePhotonState, settings: BellSettings) -> float:
    return evaluate_chsh(state, settings).s2


def _chsh_wing_coefficients(state: BipartitePhotonState, response_time: float):
    """Coefficients of E(u, v) = 2 Re[g_pp e^{-i(u+v)} + g_pm e^{-i(u-v)}]."""
    g = _delta_table(state)
    s1 = float(sinc(state.comb.delta_omega * response_time / 2.0)) ** 2
    g_pp = g[2, 2] * s1  # da = +1, db = +1
    g_pm = g[2, 0] * s1  # da = +1, db = -1
    return g_pp, g_pm


def _chsh_correlation_grid(g_pp, g_pm, u, v):
    return 2.0 * (g_pp * np.exp(-1j * (u + v)) + g_pm * np.exp(-1j * (u - v))).real


def maximize_s2(
    state: BipartitePhotonState,
    response_time: float,
    grid_points: int = 64,
    refine_rounds: int = 40,
) -> tuple[BellSettings, float]:
    """Search max S_2 over the three setting differences within one beat.

    Coarse 64^3 grid over (t_b - t_a, t'_a - t_a, t'_b - t_b) with t_a = 0,
    then cyclic 1-D refinement of each coordinate. The objective is smooth
    and periodic, so the grid optimum is already in the right basin.
    """
    _require_two_modes(state)
    dw = state.comb.delta_omega
    period = 2 * np.pi / dw
    g_pp, g_pm = _chsh_wing_coefficients(state, response_time)

    x = np.linspace(0.0, 2 * np.pi, grid_points, endpoint=False)
    x1 = x[:, None, None]  # dw * (t_b - t_a)
    x2 = x[None, :, None]  # dw * (t'_a - t_a)
    x3 = x[None, None, :]  # dw * (t'_b - t_b)
    s2_grid = (
        _chsh_correlation_grid(g_pp, g_pm, 0.0, x1)
        - _chsh_correlation_grid(g_pp, g_pm, 0.0, x1 + x3)
        + _chsh_correlation_grid(g_pp, g_pm, x2, x1)
        + _chsh_correlation_grid(g_pp, g_pm, x2, x1 + x3)
    )
    flat = int(np.argmax(s2_grid))
    i1, i2, i3 = np.unravel_index(flat, s2_grid.shape)
    diffs = np.array([x[i1], x[i2], x[i3]]) / dw

    def value(d):
        return chsh_s2(
            state,
            BellSettings(0.0, d[1], d[0], d[0] + d[2], response_time),
        )

    diffs = _coordinate_refine(value, diffs, period / grid_points, refine_rounds)
    best = BellSettings(0.0, diffs[1], diffs[0], diffs[0] + diffs[2], response_time)
    return best, value(diffs)


def _coordinate_refine(value, coords, step, rounds):
    coords = np.array(coords, dtype=float)
    initial_step = step
    for _ in range(rounds):
        moved = 0.0
        for i in range(len(coords)):
            lo, hi = coords[i] - step, coords[i] + step

            def negated(xi, i=i):
                trial = coords.copy()
                trial[i] = xi
                return -value(trial)

            res = minimize_scalar(
                negated, bounds=(lo, hi), method="bounded", options={"xatol": step * 1e-10}
            )
            moved = max(moved, abs(res.x - coords[i]))
            coords[i] = res.x
        if moved < initial_step * 1e-10:
            break
        step = max(moved * 2.0, step * 0.25)
    return coords


def find_s2_threshold(
    state: BipartitePhotonState,
    t_low: float | None = None,
    t_high: float | None = None,
    grid_points: int = 48,
) -> float:
    """Response time where the searched max S_2 crosses the classical 2."""
    _require_two_modes(state)
    period = state.comb.beat_period
    t_low = 0.05 * period if t_low is None else t_low
    t_high = 0.45 * period if t_high is None else t_high

    def excess(T):
        return maximize_s2(state, T, grid_points=grid_points)[1] - 2.0

    return float(brentq(excess, t_low, t_high, xtol=period * 1e-9))


# --------------------------------------------------------------------------
# high-dimensional indicator S_N
# --------------------------------------------------------------------------


def _sn_terms(n: int):
    """(weight, pair_index, port_offset) triples of the S_N sum.

    Pair indices: 0 = (t_a,t_b), 1 = (t_a,t'_b), 2 = (t'_a,t_b),
    3 = (t'_a,t'_b).
    """
    terms = []
    for k in range(n // 2):
        w = 1.0 - 2.0 * k / (n - 1)
        terms += [
            (+w, 0, k), (+w, 2, -k - 1), (+w, 3, k), (+w, 1, -k),
            (-w, 0, -k - 1), (-w, 2, k), (-w, 3, -k - 1), (-w, 1, k + 1),
        ]
    return terms


def bell_sn(state: BipartitePhotonState, settings: BellSettings) -> float:
    """Weighted-correlation indicator S_N; local models satisfy |S_N| <= 2."""
    n = state.comb.n_modes
    if n < 2:
        raise ValueError("S_N needs at least 2 modes")
    pairs = (
        (settings.t_a, settings.t_b),
        (settings.t_a, settings.t_b_prime),
        (settings.t_a_prime, settings.t_b),
        (settings.t_a_prime, settings.t_b_prime),
    )
    total = 0.0
    for weight, pair, offset in _sn_terms(n):
        ta, tb = pairs[pair]
        total += weight * joint_probability(state, ta, tb, offset, settings.response_time)
    return total


def optimal_settings(
    comb: FrequencyComb, response_time: float = 0.0, *, prime_sign: int = +1
) -> BellSettings:
    """Rule-based settings: t_b - t_a = pi/(2N dw), primed shifts pi/(N dw).

    ``prime_sign`` selects the sign of both primed shifts; see the module
    docstring for which variant attains the quantum optimum under the
    conventions used here.
    """
    if comb.n_modes < 2:
        raise ValueError("Bell settings need at least 2 modes")
    if prime_sign not in (+1, -1):
        raise ValueError("prime_sign must be +1 or -1")
    n, dw = comb.n_modes, comb.delta_omega
    t_b = np.pi / (2 * n * dw)
    shift = prime_sign * np.pi / (n * dw)
    return BellSettings(0.0, shift, t_b, t_b + shift, response_time)


def maximize_bell_sn(
    state: BipartitePhotonState,
    response_time: float,
    grid_points: int = 32,
    refine_rounds: int = 40,
) -> tuple[BellSettings, float]:
    """Grid search plus refinement of S_N over the three setting differences."""
    n = state.comb.n_modes
    if n < 2:
        raise ValueError("S_N needs at least 2 modes")
    dw = state.comb.delta_omega
    period = 2 * np.pi / dw
    g = _delta_table(state)
    s = _sinc_factors(n, dw, response_time)

    # aggregate, per setting pair, the wing coefficients of the Fourier
    # series S_N = sum_pairs Re sum_wings coeff * e^{-i(u da + v db)}
    wings: dict[tuple[int, int], np.ndarray] = {}
    for da in range(-(n - 1), n):
        for db in (-da - n, -da, -da + n):
            if not -(n - 1) <= db <= n - 1:
                continue
            base = g[da + n - 1, db + n - 1] * s[da + n - 1] * s[db + n - 1] / n
            if base == 0:
                continue
            coeffs = np.zeros(4, dtype=complex)
            for weight, pair, offset in _sn_terms(n):
                coeffs[pair] += weight * np.exp(-2j * np.pi * (offset % n) * db / n)
            wings[(da, db)] = base * coeffs

    x = np.linspace(0.0, 2 * np.pi, grid_points, endpoint=False)
    x1 = x[:, None, None]
    x2 = x[None, :, None]
    x3 = x[None, None, :]
    pair_uv = ((0.0, x1), (0.0, x1 + x3), (x2, x1), (x2, x1 + x3))
    grid = np.zeros((grid_points,) * 3)
    for (da, db), coeffs in wings.items():
        for pair, (u, v) in enumerate(pair_uv):
            if coeffs[pair] == 0:
                continue
            grid = grid + (coeffs[pair] * np.exp(-1j * (u * da + v * db))).real
    flat = int(np.argmax(grid))
    i1, i2, i3 = np.unravel_index(flat, grid.shape)
    diffs = np.array([x[i1], x[i2], x[i3]]) / dw

    def value(d):
        return bell_sn(
            state, BellSettings(0.0, d[1], d[0], d[0] + d[2], response_time)
        )

    diffs = _coordinate_refine(value, diffs, period / grid_points, refine_rounds)
    best = BellSettings(0.0, diffs[1], diffs[0], diffs[0] + diffs[2], response_time)
    return best, value(diffs)


# --------------------------------------------------------------------------
# Monte Carlo coincidence sampling
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoincidenceSample:
    """Seeded event log of one setting pair plus run metadata."""

    seed: int
    t_a: float
    t_b: float
    response_time: float
    eta_a: float
    eta_b: float
    n_modes: int
    event_id: np.ndarray
    jitter_a: np.ndarray
    jitter_b: np.ndarray
    port_a: np.ndarray  # 1-based port labels
    port_b: np.ndarray
    kept: np.ndarray
    _table_cache: dict = field(default_factory=dict, repr=False)

    @property
    def kept_count(self) -> int:
        return int(np.count_nonzero(self.kept))

    def empirical_table(self) -> np.ndarray:
        """Kept-event coincidence frequencies, normalized to sum 1."""
        if "table" not in self._table_cache:
            n = self.n_modes
            idx = (self.port_a[self.kept] - 1) * n + (self.port_b[self.kept] - 1)
            counts = np.bincount(idx, minlength=n * n).reshape(n, n)
            total = counts.sum()
            if total == 0:
                raise ValueError("no kept events to tabulate")
            self._table_cache["table"] = counts / total
        return self._table_cache["table"]


def sample_coincidence_events(
    state: BipartitePhotonState,
    t_a: float,
    t_b: float,
    response_time: float,
    n_events: int,
    seed: int,
    eta_a: float = 1.0,
    eta_b: float = 1.0,
) -> CoincidenceSample:
    """Monte Carlo realization of one setting pair's coincidence statistics.

    Per event: jitter offsets are drawn uniformly from [-T/2, T/2] for each
    party (the box response), the instantaneous port-pair distribution at
    the jittered instants is sampled, and each detector keeps the event
    with its efficiency. The Philox counter-based stream and the fixed
    draw order (jitter a, jitter b, outcome, efficiency a, efficiency b)
    make runs with equal seeds byte-identical.
    """
    if seed is None:
        raise ValueError("a seed is mandatory for reproducible sampling")
    if n_events < 1:
        raise ValueError("need at least one event")
    if not (0.0 < eta_a <= 1.0 and 0.0 < eta_b <= 1.0):
        raise ValueError("efficiencies must lie in (0, 1]")
    n = state.comb.n_modes
    dw = state.comb.delta_omega
    rng = np.random.Generator(np.random.Philox(key=int(seed)))

    jit_a = (rng.random(n_events) - 0.5) * response_time
    jit_b = (rng.random(n_events) - 0.5) * response_time

    # instantaneous (T = 0) joint distribution at the jittered instants
    g = _delta_table(state)
    deltas = np.arange(-(n - 1), n)
    ports = np.arange(n)
    phase = np.exp(-2j * np.pi * np.outer(ports, deltas) / n)  # (port, delta)
    u = t_a + jit_a
    v = t_b + jit_b
    probs = np.zeros((n_events, n, n))
    for ia, da in enumerate(deltas):
        for ib, db in enumerate(deltas):
            if g[ia, ib] == 0:
                continue
            evt = g[ia, ib] * np.exp(-1j * dw * (u * da + v * db))
            probs += np.real(
                evt[:, None, None] * (phase[:, ia][:, None] * phase[:, ib][None, :])
            )
    probs = np.clip(probs.reshape(n_events, n * n) / n**2, 0.0, None)
    probs /= probs.sum(axis=1, keepdims=True)

    draw = rng.random(n_events)
    cum = np.cumsum(probs, axis=1)
    outcome = np.minimum((draw[:, None] > cum).sum(axis=1), n * n - 1)
    port_a = outcome // n + 1
    port_b = outcome % n + 1

    kept = (rng.random(n_events) < eta_a) & (rng.random(n_events) < eta_b)

    return CoincidenceSample(
        seed=int(seed),
        t_a=float(t_a),
        t_b=float(t_b),
        response_time=float(response_time),
        eta_a=float(eta_a),
        eta_b=float(eta_b),
        n_modes=n,
        event_id=np.arange(n_events),
        jitter_a=jit_a,
        jitter_b=jit_b,
        port_a=port_a,
        port_b=port_b,
        kept=kept,
    )


# --------------------------------------------------------------------------
# CSV emission
# --------------------------------------------------------------------------


def _open_text(f):
    if isinstance(f, io.TextIOBase):
        return f, False
    return open(f, "w", newline=""), True


def write_chsh_sweep_csv(rows, f) -> None:
    """Rows of (t_b - t_a, T, S_2); header dt_ab_s,response_time_s,s2."""
    out, close = _open_text(f)
    try:
        out.write("dt_ab_s,response_time_s,s2\n")
        for dt, T, s2 in rows:
            out.write(f"{format_float(dt)},{format_float(T)},{format_float(s2)}\n")
    finally:
        if close:
            out.close()


def write_s2max_csv(rows, f, threshold: float | None = None) -> None:
    """Rows of (T, max S_2); optional threshold recorded as a comment."""
    out, close = _open_text(f)
    try:
        if threshold is not None:
            out.write(f"# threshold_t0_s={format_float(threshold)}\n")
        out.write("response_time_s,s2_max\n")
        for T, s2 in rows:
            out.write(f"{format_float(T)},{format_float(s2)}\n")
    finally:
        if close:
            out.close()


def write_event_log_csv(sample: CoincidenceSample, f) -> None:
    """Event log with a comment line recording seed and settings."""
    out, close = _open_text(f)
    try:
        out.write(
            "# seed={} t_a_s={} t_b_s={} response_time_s={} eta_a={} eta_b={}\n".format(
                sample.seed,
                format_float(sample.t_a),
                format_float(sample.t_b),
                format_float(sample.response_time),
                format_float(sample.eta_a),
                format_float(sample.eta_b),
            )
        )
        out.write("event_id,jitter_a_s,jitter_b_s,port_a,port_b,kept\n")
        for i in range(len(sample.event_id)):
            out.write(
                "{},{},{},{},{},{}\n".format(
                    sample.event_id[i],
                    format_float(sample.jitter_a[i]),
                    format_float(sample.jitter_b[i]),
                    sample.port_a[i],
                    sample.port_b[i],
                    int(sample.kept[i]),
                )
            )
    finally:
        if close:
            out.close()
