"""Command-line front end.

Physical inputs arrive in conventional units (FSR in GHz, times in ps) and
are converted once at this boundary: delta_omega = 2*pi*FSR, T = ps*1e-12.
Each subcommand is fully determined by its flags; equal invocations
produce byte-identical files (CSV floats carry 17 significant digits).
Exit status is nonzero exactly when a precondition or verification fails.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bell, circuits, measure
from ._util import format_float, worker_count
from .states import FrequencyComb, UnitaryMap, make_bell_state

# Carrier choice is irrelevant to every observable (only differences of
# mode frequencies enter); a C-band line keeps netlists physically plausible.
DEFAULT_OMEGA0 = 2 * np.pi * 193.1e12

GHZ = 1e9
PS = 1e-12


def _comb(n_modes: int, fsr_ghz: float, omega0: float = DEFAULT_OMEGA0) -> FrequencyComb:
    if fsr_ghz <= 0:
        raise SystemExit("error: --fsr-ghz must be positive")
    return FrequencyComb(omega0, 2 * np.pi * fsr_ghz * GHZ, n_modes)


def _parse_modes_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise SystemExit(f"error: cannot parse mode list {text!r}")
    if not values:
        raise SystemExit("error: empty mode list")
    return values


def _sweep_grid(args, default_from: float, default_to: float, default_steps: int):
    lo = default_from if args.sweep_from is None else args.sweep_from
    hi = default_to if args.sweep_to is None else args.sweep_to
    steps = default_steps if args.sweep_steps is None else args.sweep_steps
    if steps < 1:
        raise SystemExit("error: --sweep-steps must be positive")
    return np.linspace(lo, hi, steps)


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", newline="") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.modes < 2:
        raise SystemExit("error: --modes must be at least 2 for synthesis")
    comb = _comb(args.modes, args.fsr_ghz)
    tree = circuits.synthesize_demux(comb)
    report = circuits.verify_demux(tree)
    if args.out:
        _write_json(args.out, circuits.netlist_to_dict(tree))
        print(f"wrote netlist to {args.out}")
    tau1 = np.pi / comb.delta_omega
    print(f"demux tree: {len(tree.nodes)} MZIs in {tree.levels} levels, "
          f"tau_1 = {format_float(tau1)} s")
    for k, port in enumerate(report.ports):
        print(f"  mode {k} -> port {port}")
    if tree.dropped_ports:
        print(f"  dropped ports: {list(tree.dropped_ports)}")
    print(f"  max leakage: {format_float(report.leakage)}")
    return 0


def cmd_demux_check(args) -> int:
    with open(args.netlist) as f:
        obj = circuits.netlist_from_dict(json.load(f))
    if not isinstance(obj, circuits.DemuxTree):
        raise SystemExit("error: netlist is not a demux tree")
    report = circuits.verify_demux(obj)
    for k, port in enumerate(report.ports):
        print(f"mode {k} -> port {port}")
    print(f"max leakage: {format_float(report.leakage)}")
    return 0


def cmd_decompose(args) -> int:
    if (args.input is None) == (args.random is None):
        raise SystemExit("error: give exactly one of --in or --random")
    if args.random is not None:
        if args.seed is None:
            raise SystemExit("error: --random requires --seed")
        from scipy.stats import unitary_group

        matrix = unitary_group.rvs(args.random, random_state=args.seed)
        u = UnitaryMap(matrix)
    else:
        with open(args.input) as f:
            u = UnitaryMap.from_dict(json.load(f))
    mesh = circuits.decompose_unitary(u)
    error = float(np.linalg.norm(circuits.reconstruct_mesh(mesh).matrix - u.matrix))
    if error > circuits.RECONSTRUCT_TOL:
        raise SystemExit(f"error: reconstruction error {error:.3e} exceeds tolerance")
    if args.out:
        _write_json(args.out, circuits.netlist_to_dict(mesh))
        print(f"wrote netlist to {args.out}")
    print(f"mesh: {u.n_modes} modes, {len(mesh.layers)} elements, "
          f"reconstruction error {format_float(error)}")
    return 0


def cmd_fidelity(args) -> int:
    n_values = _parse_modes_list(args.modes)
    comb = _comb(max(n_values), args.fsr_ghz)
    if args.sweep_from is None and args.sweep_to is None and args.sweep_steps is None:
        jitters_ps = np.array([args.jitter_ps])
    else:
        jitters_ps = _sweep_grid(args, 0.0, args.jitter_ps, 11)
    times = [t * PS for t in jitters_ps]
    rows = measure.fidelity_sweep(args.basis, n_values, times, comb)
    if args.out:
        measure.write_fidelity_csv(rows, args.out)
        print(f"wrote {len(rows)} rows to {args.out}")
    for n, T, fid in rows:
        print(f"N={n} T={format_float(T)} s F={format_float(fid)}")
    return 0


def cmd_chsh(args) -> int:
    comb = _comb(2, args.fsr_ghz)
    state = make_bell_state(comb)
    period = comb.beat_period
    if args.mode == "sweep":
        T = args.jitter_ps * PS
        dts = _sweep_grid(args, 0.0, period * (1 - 1 / 64) / PS, 64) * PS
        shift = np.pi / (2 * comb.delta_omega)
        rows = []
        for dt in dts:
            settings = bell.BellSettings(0.0, shift, dt, dt + shift, T)
            rows.append((float(dt), T, bell.chsh_s2(state, settings)))
        if args.out:
            bell.write_chsh_sweep_csv(rows, args.out)
            print(f"wrote {len(rows)} rows to {args.out}")
        for dt, T_, s2 in rows:
            print(f"dt={format_float(dt)} s S2={format_float(s2)}")
    else:
        times = _sweep_grid(args, 0.0, period / PS, 50) * PS
        results = _parallel_max_s2(state, times)
        threshold = bell.find_s2_threshold(state)
        rows = list(zip(map(float, times), results))
        if args.out:
            bell.write_s2max_csv(rows, args.out, threshold=threshold)
            print(f"wrote {len(rows)} rows to {args.out}")
        for T, s2 in rows:
            print(f"T={format_float(T)} s S2_max={format_float(s2)}")
        print(f"threshold T0 = {format_float(threshold)} s "
              f"({format_float(threshold / period)} beat periods)")
    return 0


def _parallel_max_s2(state, times):
    def one(T):
        return bell.maximize_s2(state, float(T))[1]

    workers = min(worker_count(), len(times))
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, times))
    return [one(T) for T in times]


def cmd_cglmp(args) -> int:
    if args.modes < 2:
        raise SystemExit("error: --modes must be at least 2")
    comb = _comb(args.modes, args.fsr_ghz)
    state = make_bell_state(comb)
    T = args.jitter_ps * PS
    report: dict = {"n_modes": args.modes, "fsr_ghz": args.fsr_ghz,
                    "response_time_s": T}
    for sign, key in ((+1, "rule"), (-1, "rule_mirrored")):
        settings = bell.optimal_settings(comb, T, prime_sign=sign)
        value = bell.bell_sn(state, settings)
        report[key] = {
            "prime_sign": sign,
            "t_a_s": settings.t_a,
            "t_a_prime_s": settings.t_a_prime,
            "t_b_s": settings.t_b,
            "t_b_prime_s": settings.t_b_prime,
            "s_n": value,
        }
        print(f"S_N (rule, prime_sign={sign:+d}) = {format_float(value)}")
    if args.mode == "search":
        settings, value = bell.maximize_bell_sn(state, T)
        report["searched"] = {
            "t_a_s": settings.t_a,
            "t_a_prime_s": settings.t_a_prime,
            "t_b_s": settings.t_b,
            "t_b_prime_s": settings.t_b_prime,
            "s_n_max": value,
        }
        print(f"S_N (searched maximum) = {format_float(value)}")
    if args.out:
        _write_json(args.out, report)
        print(f"wrote report to {args.out}")
    return 0


def cmd_sample(args) -> int:
    if args.seed is None:
        raise SystemExit("error: --seed is mandatory for sampling")
    comb = _comb(2, args.fsr_ghz)
    state = make_bell_state(comb)
    T = args.jitter_ps * PS
    t_a = args.ta_ps * PS
    t_b = args.tb_ps * PS if args.tb_ps is not None else np.pi / (4 * comb.delta_omega)
    sample = bell.sample_coincidence_events(
        state, t_a, t_b, T, args.events, args.seed, args.eta_a, args.eta_b
    )
    if args.out:
        bell.write_event_log_csv(sample, args.out)
        print(f"wrote {args.events} events to {args.out}")
    kept = sample.kept_count
    print(f"kept {kept} of {args.events} events")
    if kept:
        table = sample.empirical_table()
        e_val = bell.chsh_correlation(table)
        stderr = np.sqrt(max(1.0 - e_val**2, 0.0) / kept)
        for i in range(2):
            for j in range(2):
                print(f"C_{i + 1}{j + 1} = {format_float(table[i, j])}")
        print(f"E = {format_float(e_val)} +/- {format_float(stderr)}")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, jitter_default: float = 3.0):
    p.add_argument("--fsr-ghz", type=float, default=1.0,
                   help="comb free-spectral range in GHz (default 1)")
    p.add_argument("--jitter-ps", type=float, default=jitter_default,
                   help=f"detector response time in ps (default {jitter_default})")
    p.add_argument("--out", help="output file path")
    p.add_argument("--format", choices=("csv", "json"), default=None,
                   help="output format where a choice exists")


def _add_sweep(p: argparse.ArgumentParser):
    p.add_argument("--sweep-from", type=float, default=None,
                   help="sweep start (ps)")
    p.add_argument("--sweep-to", type=float, default=None,
                   help="sweep end (ps)")
    p.add_argument("--sweep-steps", type=int, default=None,
                   help="number of sweep points")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqcomb",
        description="Frequency-bin qudit circuits, measurement fidelity, and Bell tests",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a demultiplexing MZI tree")
    p.add_argument("--modes", type=int, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("demux-check", help="verify routing of a saved netlist")
    p.add_argument("netlist", help="demux tree JSON file")
    p.set_defaults(func=cmd_demux_check)

    p = sub.add_parser("decompose", help="decompose a unitary into a mesh")
    p.add_argument("--in", dest="input", help="unitary JSON file")
    p.add_argument("--random", type=int, help="use a Haar-random unitary of this size")
    p.add_argument("--seed", type=int, help="seed for --random")
    p.add_argument("--out", help="output netlist path")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("fidelity", help="projection fidelity vs response time")
    p.add_argument("--basis", choices=("pair", "fourier"), required=True)
    p.add_argument("--modes", required=True,
                   help="comma-separated mode counts, e.g. 2,4,85")
    _add_common(p)
    _add_sweep(p)
    p.set_defaults(func=cmd_fidelity)

    p = sub.add_parser("chsh", help="CHSH S2 sweep or maximal S2 vs response time")
    p.add_argument("--mode", choices=("sweep", "maximize"), default="sweep")
    _add_common(p, jitter_default=0.0)
    _add_sweep(p)
    p.set_defaults(func=cmd_chsh)

    p = sub.add_parser("cglmp", help="high-dimensional indicator S_N")
    p.add_argument("--modes", type=int, required=True)
    p.add_argument("--mode", choices=("settings", "search"), default="settings")
    _add_common(p, jitter_default=0.0)
    p.set_defaults(func=cmd_cglmp)

    p = sub.add_parser("sample", help="Monte Carlo coincidence sampling")
    p.add_argument("--events", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ta-ps", type=float, default=0.0, help="detection time t_a (ps)")
    p.add_argument("--tb-ps", type=float, default=None,
                   help="detection time t_b (ps); default pi/(4 dw)")
    p.add_argument("--eta-a", type=float, default=1.0)
    p.add_argument("--eta-b", type=float, default=1.0)
    _add_common(p, jitter_default=0.0)
    p.set_defaults(func=cmd_sample)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, circuits.RoutingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
