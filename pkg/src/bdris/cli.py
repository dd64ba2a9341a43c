"""Command-line interface: run experiments, fit the circuit, self-verify."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .channel import (
    PathlossModel,
    build_channel_set,
    effective_channel_admittance,
    effective_channel_scattering,
    generate_taps,
    proposition1_oracle,
)
from .circuit import fit_linear_model, fit_nmse
from .config import ConfigError, load_config, load_fit_inputs
from .experiment import emit_results, run_experiment
from .network import GROUP, AdmittanceMatrixSet, RisTopology, scattering_from_admittance
from .optimize import average_rate, water_filling

VERIFY_PATHLOSS = PathlossModel(
    reference_gain_db=-30,
    distance_rt=33,
    distance_ri=5,
    distance_it=30,
    exponent_rt=3.8,
    exponent_ri=2.2,
    exponent_it=2.5,
)
Y0 = 0.02


def _random_lossless_admittances(rng, n, m, scale=0.05):
    raw = rng.standard_normal((n, m, m)) * scale
    return 1j * (raw + raw.transpose(0, 2, 1)) / 2


def _check_proposition1(rng) -> tuple[bool, str]:
    worst = 0.0
    for m in (1, 2, 4):
        for _ in range(10):
            taps = generate_taps(int(rng.integers(2**31)), m, (4, 4, 4), VERIFY_PATHLOSS)
            theta = scattering_from_admittance(
                _random_lossless_admittances(rng, 8, m), Y0
            )
            worst = max(worst, proposition1_oracle(taps, theta))
    ok = worst <= 1e-10
    return ok, f"max off-diagonal deviation {worst:.3e} (bound 1e-10)"


def _check_unitarity(rng) -> tuple[bool, str]:
    worst_u, worst_s = 0.0, 0.0
    for _ in range(20):
        m = int(rng.integers(1, 13))
        theta = scattering_from_admittance(_random_lossless_admittances(rng, 1, m), Y0)[0]
        worst_u = max(
            worst_u, float(np.linalg.norm(theta @ theta.conj().T - np.eye(m))) / m
        )
        worst_s = max(worst_s, float(np.linalg.norm(theta - theta.T)))
    ok = worst_u <= 1e-9 and worst_s <= 1e-10
    return ok, f"unitarity {worst_u:.3e}/M (bound 1e-9), symmetry {worst_s:.3e}"


def _check_equivalence(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(20):
        m = int(rng.integers(1, 9))
        cs = build_channel_set(int(rng.integers(2**31)), m, (4, 4, 4), VERIFY_PATHLOSS, 8, Y0)
        y = _random_lossless_admittances(rng, 8, m)
        topo = RisTopology(GROUP, m, m)
        yset = AdmittanceMatrixSet(y=y, y0=Y0, topology=topo)
        h_adm = effective_channel_admittance(cs.adm, yset)
        h_sc = effective_channel_scattering(cs.freq, scattering_from_admittance(y, Y0))
        worst = max(worst, float(np.max(np.abs(h_adm - h_sc) / np.abs(h_sc))))
    ok = worst <= 1e-10
    return ok, f"max relative deviation {worst:.3e} (bound 1e-10)"


def _check_water_filling(rng) -> tuple[bool, str]:
    worst_budget, kkt_ok, beats_uniform = 0.0, True, True
    for _ in range(20):
        h = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        h *= 10.0 ** rng.uniform(-2, 0, 64)
        power = 10.0 ** rng.uniform(-1, 2)
        sigma2 = 10.0 ** rng.uniform(-5, -3)
        alloc = water_filling(h, power, sigma2)
        worst_budget = max(worst_budget, abs(alloc.p.sum() - power) / power)
        inv = sigma2 / np.abs(h) ** 2
        active = alloc.p > 0
        kkt_ok &= bool(
            np.allclose(alloc.p[active], alloc.water_level - inv[active], rtol=1e-6)
        )
        kkt_ok &= bool(np.all(alloc.water_level <= inv[~active] * (1 + 1e-9)))
        uniform = float(np.mean(np.log2(1 + (power / 64) * np.abs(h) ** 2 / sigma2)))
        beats_uniform &= average_rate(h, alloc) >= uniform - 1e-12
    ok = worst_budget <= 1e-9 and kkt_ok and beats_uniform
    return ok, (
        f"budget error {worst_budget:.3e}, KKT {'ok' if kkt_ok else 'VIOLATED'}, "
        f"rate >= uniform {'ok' if beats_uniform else 'VIOLATED'}"
    )


def _cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    checks = (
        ("proposition-1 diagonalization", _check_proposition1),
        ("scattering unitarity and symmetry", _check_unitarity),
        ("scattering/admittance channel equivalence", _check_equivalence),
        ("water-filling KKT", _check_water_filling),
    )
    failures = 0
    for label, check in checks:
        ok, detail = check(rng)
        print(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 1


def _cmd_fit_circuit(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        text = fh.read()
    circuit, band, omega_c = load_fit_inputs(text)
    model = fit_linear_model(circuit, omega_c, band)
    print(f"f1_slope      = {model.f1_slope:.6e}  (1/(rad/s))")
    print(f"f1_intercept  = {model.f1_intercept:.6e}")
    print(f"f2_slope      = {model.f2_slope:.6e}  (S/(rad/s))")
    print(f"f2_intercept  = {model.f2_intercept:.6e}  (S)")
    print(f"susceptance   = [{model.susceptance_min:.6e}, {model.susceptance_max:.6e}] S")
    print(f"fit NMSE      = {fit_nmse(circuit, model, band):.6e}")
    return 0


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, base_seed=args.seed)
    if args.trials is not None:
        config = replace(config, trials=args.trials)
    table = run_experiment(config)
    written = emit_results(table, args.out, plots=not args.no_plots)
    for path in written:
        print(f"wrote {path}")
    print(f"rows={len(table.rows)} failed={table.failed}")
    return 0 if table.failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bdris",
        description="Wideband BD-RIS aided OFDM simulation and optimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and emit results")
    run_p.add_argument("config", help="scenario INI file")
    run_p.add_argument("--out", default="results", help="output directory")
    run_p.add_argument("--seed", type=int, default=None, help="override base seed")
    run_p.add_argument("--trials", type=int, default=None, help="override trial count")
    run_p.add_argument("--no-plots", action="store_true", help="skip figure output")
    run_p.set_defaults(handler=_cmd_run)

    fit_p = sub.add_parser("fit-circuit", help="fit the susceptance model")
    fit_p.add_argument("config", help="scenario INI file with a [circuit] section")
    fit_p.set_defaults(handler=_cmd_fit_circuit)

    ver_p = sub.add_parser("verify", help="run the built-in oracle checks")
    ver_p.add_argument("--seed", type=int, default=2024, help="seed for the checks")
    ver_p.set_defaults(handler=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for violation in exc.violations:
            print(f"  - {violation}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
