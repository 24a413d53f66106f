"""Command-line front end.

    ppmqkd keyrate      --config calibrated [--seed S] [--mode M] [--out DIR]
    ppmqkd sweep        --config calibrated --scenario fig3 [--workers W]
    ppmqkd simulate     --config paper_defaults --frames 1000000 [--ledger frames.csv]
    ppmqkd decoy-bounds --config paper_defaults --q-mu 0.044 --q-nu1 0.0018 --q-nu2 9e-4
    ppmqkd holevo       --config paper_defaults --visibility-ratio 0.997

Exit codes: 0 success, 2 configuration error, 3 some points failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import replace

from . import __version__
from .config import (FIG2_N, FIG3_DISTANCES, FIG3_N, MODES, SCENARIOS, ConfigError, RunConfig,
                     load_config)
from .decoy import DecoyObservables, decoy_estimate
from .holevo import (VisibilityMeasurement, disturbance_budget, finite_key_inflation,
                     franson_visibility, maximize_holevo, security_baseline, time_assumptions_for)
from .keyrate import KeyRateReport, PointConfig, sweep

EXIT_OK, EXIT_CONFIG, EXIT_FAILURES = 0, 2, 3
CSV_SCHEMA = "ppmqkd-keyrate/1"
CSV_COLUMNS = ("N", "distance_km", "Q_mu", "Q1_low", "chi_E", "chi1_up", "I_AB", "pie",
               "key_rate_bps", "photon_rate_hz", "seed", "mode", "error")


# --- scenario expansion -------------------------------------------------------------------

def scenario_points(cfg: RunConfig, name: str | None = None) -> list[PointConfig]:
    """Operating points of a scenario, in output order (mode, then N, then distance)."""
    name = name or cfg.scenario
    base = cfg.point
    if name == "fig2":
        grid = [(n, base.length_km) for n in FIG2_N]
    elif name == "fig3":
        grid = [(n, d) for n in FIG3_N for d in FIG3_DISTANCES]
    elif name == "custom":
        grid = [(n, d) for n in cfg.sweep_N for d in cfg.sweep_distances_km]
    else:
        raise ConfigError(f"run.scenario: unknown scenario {name!r}")
    modes = ("analytic", "montecarlo") if cfg.mode == "both" else (cfg.mode,)
    return [base.with_(N=n, length_km=float(d), mode=m, seed=cfg.seed)
            for m in modes for n, d in grid]


# --- reporting ------------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.9g}"


def report_row(r: KeyRateReport) -> list[str]:
    vals = (r.N, r.distance_km, r.Q_mu, r.Q1_low, r.chi_E, r.chi1_upper, r.I_AB, r.pie, r.R,
            r.photon_reception_rate, r.seed, r.mode, r.error or "")
    return [_fmt(v) for v in vals]


def reports_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow(report_row(r))
    return buf.getvalue()


def emit_report(reports, out_dir: str, stem: str, cfg: RunConfig | None = None,
                extra: dict | None = None) -> tuple[str, str]:
    """Write ``<stem>.csv`` and ``<stem>.json`` into ``out_dir``; returns both paths."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to emit")
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    json_path = os.path.join(out_dir, f"{stem}.json")
    with open(csv_path, "w", newline="") as fh:
        fh.write(reports_csv(reports))
    failures = [{"N": r.N, "distance_km": r.distance_km, "mode": r.mode, "error": r.error}
                for r in reports if r.error]
    summary = {
        "schema": CSV_SCHEMA,
        "columns": list(CSV_COLUMNS),
        "version": __version__,
        "config_hash": cfg.digest() if cfg is not None else None,
        "rows": len(reports),
        "failures": failures,
        "csv": os.path.basename(csv_path),
        **(extra or {}),
    }
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def read_report_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for k in CSV_COLUMNS:
            if k in ("mode", "error"):
                continue
            row[k] = int(row[k]) if k in ("N", "seed") else float(row[k])
    return rows


# --- subcommands ---------------------------------------------------------------------------

def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_overrides(seed=args.seed, mode=args.mode, out=args.out,
                              scenario=getattr(args, "scenario", None),
                              workers=getattr(args, "workers", None))


def _has_failures(reports) -> bool:
    return any(r.error for r in reports)


def cmd_keyrate(args) -> int:
    cfg = _config(args)
    points = scenario_points(replace(cfg, sweep_N=(cfg.point.N,),
                                     sweep_distances_km=(cfg.point.length_km,)), "custom")
    reports = sweep(points)
    emit_report(reports, cfg.out, "keyrate", cfg)
    for r in reports:
        print(f"N={r.N} L={r.distance_km:g} km mode={r.mode}: PIE={r.pie:.4f} bit/photon "
              f"chi_E={r.chi_E:.4f} R={r.R:.6g} bit/s" + (f"  [{r.error}]" if r.error else ""))
    return EXIT_FAILURES if _has_failures(reports) else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    reports = sweep(scenario_points(cfg), workers=cfg.workers)
    csv_path, _ = emit_report(reports, cfg.out, f"sweep_{cfg.scenario}", cfg,
                              extra={"scenario": cfg.scenario, "mode": cfg.mode, "seed": cfg.seed})
    print(f"wrote {len(reports)} rows to {csv_path}")
    return EXIT_FAILURES if _has_failures(reports) else EXIT_OK


def cmd_simulate(args) -> int:
    from .keyrate import mutual_information_empirical
    from .ppm_sim import SimSetup, dump_ledger, simulate

    cfg = _config(args)
    p = cfg.point
    frames = args.frames or p.mc_frames
    dc = p.decoy_config(acceptance=p.detector.gate_acceptance(p.frame.tau))
    setup = SimSetup(p.frame, p.source, p.detector, min(p.eta / p.detector.efficiency, 1.0),
                     p.split, dc)
    st = simulate(setup, cfg.seed, frames, workers=cfg.workers)
    out = {
        "version": __version__, "config_hash": cfg.digest(), "seed": cfg.seed, "frames": frames,
        "N": p.N, "distance_km": p.length_km,
        "n_ase": st.n_ase, "n_spdc": st.n_spdc, "n_sifted": st.n_sifted,
        "n_noclick_ase": st.n_noclick_ase, "n_franson_ase": st.n_franson_ase,
        "Q_mu_hat": st.Q_mu_hat, "Q_nu_hat": st.Q_nu_hat, "Q_nu1_hat": st.Q_nu1_hat,
        "Q_nu2_hat": st.Q_nu2_hat, "symbol_error_rate": st.symbol_error_rate,
        "I_AB_hat": mutual_information_empirical(st.confusion) if st.n_sifted else 0.0,
        "car_proxy": st.car_proxy(p.detector.dark_prob_per_gate),
        "confusion": st.confusion.tolist(),
    }
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "simulate.json")
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.ledger:
        dump_ledger(setup, cfg.seed, frames, args.ledger)
    print(f"Q_mu_hat={st.Q_mu_hat:.6g} symbol_error={st.symbol_error_rate:.4g} -> {path}")
    return EXIT_OK


def cmd_decoy_bounds(args) -> int:
    cfg = _config(args)
    p = cfg.point
    dc = p.decoy_config()
    obs = DecoyObservables(Q_mu=args.q_mu, Q_nu1=args.q_nu1, Q_nu2=args.q_nu2,
                           N_mu=args.n_mu or math.inf, N_nu1=args.n_nu or math.inf,
                           N_nu2=args.n_nu or math.inf, Q_nu=args.q_nu,
                           N_nu=args.n_nu or math.inf, omega_diff_sq=args.omega_diff_sq)
    try:
        est = decoy_estimate(obs, dc, p.source.mu_ppm)
    except Exception as exc:
        print(json.dumps({"error": str(exc)}))
        return EXIT_FAILURES
    out = {"Y0_low": est.Y0_low, "Y1_low": est.Y1_low, "Q1_low": est.Q1_low,
           "freq_bound": est.freq_bound, "nu1": est.nu1, "nu2": est.nu2,
           "n_alpha": dc.n_alpha, "warnings": est.warnings}
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_holevo(args) -> int:
    cfg = _config(args)
    p = cfg.point
    sec = p.security
    ta = time_assumptions_for(p.frame.T_f, p.detector.jitter_rms, p.biphoton.sigma_coh,
                              p.biphoton.sigma_cor, sec.uniform_factor)
    dT = p.frame.T_f if sec.delta_T_mode == "frame" else p.biphoton.delta_T
    t0 = security_baseline(replace(p.biphoton, delta_T=dT), ta)
    v_th = franson_visibility(t0, dT)
    v = args.visibility if args.visibility is not None else args.visibility_ratio * v_th
    budget = disturbance_budget(VisibilityMeasurement(v, v_th, sec.m_visibility, sec.eps_pe), dT)
    if sec.finite_key:
        budget *= finite_key_inflation(sec.m_visibility, sec.eps_pe)
    res = maximize_holevo(t0, budget)
    print(json.dumps({"N": p.N, "delta_T": dT, "V_th": v_th, "V": v, "budget": budget,
                      "chi": res.chi, "eta_w": res.eta_w, "eps_w": res.eps_w}, indent=2,
                     sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ppmqkd", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"ppmqkd {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML file or name of a shipped config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--mode", choices=MODES)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--workers", type=int)
        return sp

    common(sub.add_parser("keyrate", help="single operating point")).set_defaults(func=cmd_keyrate)
    sp = common(sub.add_parser("sweep", help="scenario sweep"))
    sp.add_argument("--scenario", choices=SCENARIOS)
    sp.set_defaults(func=cmd_sweep)
    sp = common(sub.add_parser("simulate", help="Monte Carlo run with optional frame ledger"))
    sp.add_argument("--frames", type=int)
    sp.add_argument("--ledger", help="write the per-frame ledger (.csv or .npz)")
    sp.set_defaults(func=cmd_simulate)
    sp = common(sub.add_parser("decoy-bounds", help="decoy bounds from supplied gains"))
    sp.add_argument("--q-mu", type=float, required=True)
    sp.add_argument("--q-nu1", type=float, required=True)
    sp.add_argument("--q-nu2", type=float, required=True)
    sp.add_argument("--q-nu", type=float)
    sp.add_argument("--n-mu", type=float, help="signal frames (omit for asymptotic bounds)")
    sp.add_argument("--n-nu", type=float, help="decoy frames (omit for asymptotic bounds)")
    sp.add_argument("--omega-diff-sq", type=float, default=0.0)
    sp.set_defaults(func=cmd_decoy_bounds)
    sp = common(sub.add_parser("holevo", help="Holevo bound from a visibility"))
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--visibility", type=float)
    g.add_argument("--visibility-ratio", type=float, default=0.997)
    sp.set_defaults(func=cmd_holevo)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
