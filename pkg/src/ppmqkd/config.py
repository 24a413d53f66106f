"""TOML run configuration: parsing, defaults and field-precise validation.

Every section is optional; missing keys take the experiment's values.  Units are
SI (seconds, hertz) except fibre length (km) and attenuation (dB/km).
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

from .channel_model import SourceParams
from .decoy import DecoyConfig, check_decoy_conditions
from .frame import BIN_DURATION, DetectorModel, FrameConfig
from .holevo import BiphotonParams
from .keyrate import PointConfig, SecurityParams
from .postprocess import BLOCK_SYMBOLS, PaParams

MODES = ("analytic", "montecarlo", "both")
SCENARIOS = ("fig2", "fig3", "custom")
FIG2_N = (2, 4, 8, 16, 32, 64, 128)
FIG3_N = (2, 8, 32)
FIG3_DISTANCES = tuple(float(d) for d in range(0, 101, 5))


class ConfigError(ValueError):
    """Carries every problem found, one ``section.key: message`` per entry."""

    def __init__(self, problems):
        self.problems = list(problems) if not isinstance(problems, str) else [problems]
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class RunConfig:
    point: PointConfig = field(default_factory=PointConfig)
    pa: PaParams = field(default_factory=PaParams)
    seed: int = 0
    mode: str = "analytic"
    workers: int = 1
    out: str = "out"
    scenario: str = "custom"
    sweep_N: tuple[int, ...] = (8,)
    sweep_distances_km: tuple[float, ...] = (0.0,)
    block_symbols: int = BLOCK_SYMBOLS

    def with_overrides(self, seed=None, mode=None, out=None, scenario=None, workers=None) -> "RunConfig":
        kw = {k: v for k, v in dict(seed=seed, mode=mode, out=out, scenario=scenario,
                                    workers=workers).items() if v is not None}
        if "mode" in kw and kw["mode"] not in MODES:
            raise ConfigError(f"run.mode: must be one of {MODES}, got {kw['mode']!r}")
        if "scenario" in kw and kw["scenario"] not in SCENARIOS:
            raise ConfigError(f"run.scenario: must be one of {SCENARIOS}, got {kw['scenario']!r}")
        return replace(self, **kw)

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d.pop("workers")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=str, allow_nan=True)
        return hashlib.sha256(blob.encode()).hexdigest()


_SECTIONS = {
    "run": {"seed", "mode", "workers", "out", "scenario"},
    "frame": {"N", "tau", "frame_rate_hz"},
    "source": {"mu_ppm", "nu_bin", "p_os"},
    "channel": {"alpha_db_km", "length_km", "internal_transmission"},
    "detector": {"efficiency", "dark_count_rate_hz", "gate_width", "afterpulse_prob",
                 "afterpulse_time", "jitter_rms", "max_record_rate_hz", "split"},
    "biphoton": {"sigma_coh", "sigma_cor", "delta_T"},
    "security": {"beta", "visibility_ratio", "m_visibility", "eps_pe", "delta_T_mode", "n_R",
                 "intrinsic_symbol_error", "car_degradation", "finite_key",
                 "acquisition_time_s"},
    "decoy": {"F1_bins", "F2_bins", "eps_decoy"},
    "postprocess": {"eps_EC", "eps_PA", "eps_bar", "delta_FK", "delta_FK_coeff", "block_symbols"},
    "montecarlo": {"frames"},
    "sweep": {"N", "distances_km"},
}


def shipped_config_path(name: str) -> str:
    """Path of a config shipped with the package, by stem (``paper_defaults``)."""
    ref = resources.files("ppmqkd") / "configs" / f"{name}.toml"
    return str(ref)


def resolve_config_path(path: str) -> str:
    if os.path.exists(path):
        return path
    shipped = shipped_config_path(path)
    if os.path.exists(shipped):
        return shipped
    raise ConfigError(f"config: file not found: {path}")


def load_config(path: str | os.PathLike) -> RunConfig:
    path = resolve_config_path(os.fspath(path))
    with open(path, "rb") as fh:
        text = fh.read()
    if not text.strip():
        raise ConfigError(f"config: {path} is empty")
    try:
        doc = tomllib.loads(text.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config: parse error in {path}: {exc}") from None
    return config_from_dict(doc)


class _Collector:
    def __init__(self):
        self.problems: list[str] = []

    def build(self, section: str, factory, **kw):
        try:
            return factory(**kw)
        except (ValueError, TypeError) as exc:
            self.problems.append(f"{section}: {exc}")
            return None


def _num(problems, section, sec, key, default, kind=float):
    if key not in sec:
        return default
    v = sec[key]
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            problems.append(f"{section}.{key}: expected an integer, got {v!r}")
            return default
        return v
    if kind is bool:
        if not isinstance(v, bool):
            problems.append(f"{section}.{key}: expected true/false, got {v!r}")
            return default
        return v
    if kind is str:
        if not isinstance(v, str):
            problems.append(f"{section}.{key}: expected a string, got {v!r}")
            return default
        return v
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        problems.append(f"{section}.{key}: expected a number, got {v!r}")
        return default
    return float(v)


def config_from_dict(doc: dict) -> RunConfig:
    c = _Collector()
    p = c.problems
    for name, val in doc.items():
        if name not in _SECTIONS:
            p.append(f"{name}: unknown section")
        elif not isinstance(val, dict):
            p.append(f"{name}: expected a table")
        else:
            for key in val:
                if key not in _SECTIONS[name]:
                    p.append(f"{name}.{key}: unknown key")
    g = {s: doc.get(s, {}) if isinstance(doc.get(s, {}), dict) else {} for s in _SECTIONS}

    run = g["run"]
    seed = _num(p, "run", run, "seed", 0, int)
    mode = _num(p, "run", run, "mode", "analytic", str)
    if mode not in MODES:
        p.append(f"run.mode: must be one of {MODES}, got {mode!r}")
    scenario = _num(p, "run", run, "scenario", "custom", str)
    if scenario not in SCENARIOS:
        p.append(f"run.scenario: must be one of {SCENARIOS}, got {scenario!r}")
    workers = _num(p, "run", run, "workers", 1, int)
    if workers < 1:
        p.append("run.workers: must be >= 1")
    out = _num(p, "run", run, "out", "out", str)

    fr = g["frame"]
    tau = _num(p, "frame", fr, "tau", BIN_DURATION)
    N = _num(p, "frame", fr, "N", 8, int)
    rate = _num(p, "frame", fr, "frame_rate_hz", None) if "frame_rate_hz" in fr else None
    frame = c.build("frame", FrameConfig, N=N, tau=tau, R_f=rate)

    s = g["source"]
    source = c.build("source", SourceParams, mu_ppm=_num(p, "source", s, "mu_ppm", 0.5),
                     nu_bin=_num(p, "source", s, "nu_bin", 0.005),
                     p_os=_num(p, "source", s, "p_os", 0.7))

    d = g["detector"]
    dark_rate = _num(p, "detector", d, "dark_count_rate_hz", 8e3)
    if dark_rate < 0:
        p.append("detector.dark_count_rate_hz: must be >= 0")
    gate_width = _num(p, "detector", d, "gate_width", 100e-12)
    if gate_width > tau:
        p.append(f"detector.gate_width: {gate_width} exceeds the bin duration {tau}")
    detector = c.build("detector", DetectorModel,
                       efficiency=_num(p, "detector", d, "efficiency", 0.18),
                       dark_prob_per_gate=min(max(dark_rate, 0.0) * tau, 1.0),
                       gate_width=gate_width,
                       afterpulse_prob=_num(p, "detector", d, "afterpulse_prob", 0.0),
                       afterpulse_time=_num(p, "detector", d, "afterpulse_time", 10e-9),
                       jitter_rms=_num(p, "detector", d, "jitter_rms", 30e-12),
                       max_record_rate=_num(p, "detector", d, "max_record_rate_hz", math.inf))
    split = _num(p, "detector", d, "split", 0.5)
    if not 0.0 < split < 1.0:
        p.append(f"detector.split: must lie in (0, 1), got {split}")

    b = g["biphoton"]
    biphoton = c.build("biphoton", BiphotonParams,
                       sigma_coh=_num(p, "biphoton", b, "sigma_coh", 1e-6),
                       sigma_cor=_num(p, "biphoton", b, "sigma_cor", 2e-12),
                       delta_T=_num(p, "biphoton", b, "delta_T", 794e-12))

    se = g["security"]
    n_R = _num(p, "security", se, "n_R", None) if "n_R" in se else None
    security = c.build("security", SecurityParams,
                       beta=_num(p, "security", se, "beta", 0.90),
                       visibility_ratio=_num(p, "security", se, "visibility_ratio", 0.997),
                       m_visibility=_num(p, "security", se, "m_visibility", 100, int),
                       eps_pe=_num(p, "security", se, "eps_pe", 1e-5),
                       delta_T_mode=_num(p, "security", se, "delta_T_mode", "fixed", str),
                       n_R=n_R,
                       intrinsic_symbol_error=_num(p, "security", se, "intrinsic_symbol_error", 0.005),
                       car_degradation=_num(p, "security", se, "car_degradation", True, bool),
                       finite_key=_num(p, "security", se, "finite_key", True, bool))
    acq = _num(p, "security", se, "acquisition_time_s", 60.0)
    if acq <= 0:
        p.append("security.acquisition_time_s: must be positive")

    ch = g["channel"]
    alpha = _num(p, "channel", ch, "alpha_db_km", 0.2)
    length = _num(p, "channel", ch, "length_km", 0.0)
    internal = _num(p, "channel", ch, "internal_transmission", 1.0)
    if alpha < 0:
        p.append("channel.alpha_db_km: must be >= 0")
    if length < 0:
        p.append("channel.length_km: must be >= 0")
    if not 0.0 < internal <= 1.0:
        p.append("channel.internal_transmission: must lie in (0, 1]")

    dc = g["decoy"]
    eps_decoy = _num(p, "decoy", dc, "eps_decoy", 1e-6)
    if not 0.0 < eps_decoy < 1.0:
        p.append("decoy.eps_decoy: must lie in (0, 1)")
    bins = None
    if "F1_bins" in dc or "F2_bins" in dc:
        if not ("F1_bins" in dc and "F2_bins" in dc):
            p.append("decoy: F1_bins and F2_bins must be given together")
        else:
            bins = (_num(p, "decoy", dc, "F1_bins", 0, int), _num(p, "decoy", dc, "F2_bins", 0, int))

    pp = g["postprocess"]
    pa = c.build("postprocess", PaParams, beta=security.beta if security else 0.9,
                 eps_EC=_num(p, "postprocess", pp, "eps_EC", 1e-10),
                 eps_PA=_num(p, "postprocess", pp, "eps_PA", 1e-10),
                 eps_bar=_num(p, "postprocess", pp, "eps_bar", 1e-10),
                 delta_FK=_num(p, "postprocess", pp, "delta_FK", None) if "delta_FK" in pp else None,
                 delta_FK_coeff=_num(p, "postprocess", pp, "delta_FK_coeff", 7.0))
    block_symbols = _num(p, "postprocess", pp, "block_symbols", BLOCK_SYMBOLS, int)
    if block_symbols < 1:
        p.append("postprocess.block_symbols: must be >= 1")

    mc_frames = _num(p, "montecarlo", g["montecarlo"], "frames", 2_000_000, int)
    if mc_frames < 1:
        p.append("montecarlo.frames: must be >= 1")

    sw = g["sweep"]
    sweep_N = tuple(sw.get("N", [frame.N if frame else 8]))
    sweep_d = tuple(float(x) for x in sw.get("distances_km", [length]))
    for n in sweep_N:
        if isinstance(n, bool) or not isinstance(n, int) or n < 2 or n > 1024 or n & (n - 1):
            p.append(f"sweep.N: {n!r} is not a power of two in [2, 1024]")
    if not sweep_N:
        p.append("sweep.N: must not be empty")
    if not sweep_d or any(x < 0 for x in sweep_d):
        p.append("sweep.distances_km: must be a nonempty list of nonnegative lengths")

    # cross-field: the decoy partition at the configured frame size
    if frame and source:
        try:
            dcfg = (DecoyConfig(bins[0], bins[1], source.nu_bin, frame.N, eps_decoy=eps_decoy)
                    if bins else DecoyConfig.halves(frame.N, source.nu_bin, eps_decoy=eps_decoy))
            check_decoy_conditions(dcfg.F1_bins * source.nu_bin, dcfg.F2_bins * source.nu_bin,
                                   source.mu_ppm)
        except ValueError as exc:
            p.append(f"decoy: {exc}")

    if p:
        raise ConfigError(p)
    point = PointConfig(frame=frame, source=source, detector=detector, biphoton=biphoton,
                        security=security, alpha_db_km=alpha, length_km=length,
                        internal_transmission=internal, split=split, eps_decoy=eps_decoy,
                        decoy_bins=bins, mode="analytic" if mode == "both" else mode,
                        acquisition_time_s=acq, mc_frames=mc_frames, seed=seed)
    return RunConfig(point=point, pa=pa, seed=seed, mode=mode, workers=workers, out=out,
                     scenario=scenario, sweep_N=sweep_N, sweep_distances_km=sweep_d,
                     block_symbols=block_symbols)


def config_to_dict(cfg: RunConfig) -> dict:
    """Inverse of :func:`config_from_dict`: the TOML document that reloads to ``cfg``."""
    pt = cfg.point
    f, src, d, b, se = pt.frame, pt.source, pt.detector, pt.biphoton, pt.security
    frame = {"N": f.N, "tau": f.tau}
    if f.R_f != 1.0 / f.T_f:
        frame["frame_rate_hz"] = f.R_f
    security = {"beta": se.beta, "visibility_ratio": se.visibility_ratio,
                "m_visibility": se.m_visibility, "eps_pe": se.eps_pe,
                "delta_T_mode": se.delta_T_mode,
                "intrinsic_symbol_error": se.intrinsic_symbol_error,
                "car_degradation": se.car_degradation, "finite_key": se.finite_key,
                "acquisition_time_s": pt.acquisition_time_s}
    if se.n_R is not None:
        security["n_R"] = se.n_R
    decoy = {"eps_decoy": pt.eps_decoy}
    if pt.decoy_bins is not None:
        decoy["F1_bins"], decoy["F2_bins"] = pt.decoy_bins
    post = {"eps_EC": cfg.pa.eps_EC, "eps_PA": cfg.pa.eps_PA, "eps_bar": cfg.pa.eps_bar,
            "delta_FK_coeff": cfg.pa.delta_FK_coeff, "block_symbols": cfg.block_symbols}
    if cfg.pa.delta_FK is not None:
        post["delta_FK"] = cfg.pa.delta_FK
    return {
        "run": {"seed": cfg.seed, "mode": cfg.mode, "workers": cfg.workers, "out": cfg.out,
                "scenario": cfg.scenario},
        "frame": frame,
        "source": {"mu_ppm": src.mu_ppm, "nu_bin": src.nu_bin, "p_os": src.p_os},
        "channel": {"alpha_db_km": pt.alpha_db_km, "length_km": pt.length_km,
                    "internal_transmission": pt.internal_transmission},
        "detector": {"efficiency": d.efficiency, "dark_count_rate_hz": d.dark_prob_per_gate / f.tau,
                     "gate_width": d.gate_width, "afterpulse_prob": d.afterpulse_prob,
                     "afterpulse_time": d.afterpulse_time, "jitter_rms": d.jitter_rms,
                     "max_record_rate_hz": d.max_record_rate, "split": pt.split},
        "biphoton": {"sigma_coh": b.sigma_coh, "sigma_cor": b.sigma_cor, "delta_T": b.delta_T},
        "security": security,
        "decoy": decoy,
        "postprocess": post,
        "montecarlo": {"frames": pt.mc_frames},
        "sweep": {"N": list(cfg.sweep_N), "distances_km": list(cfg.sweep_distances_km)},
    }


def dump_config(cfg: RunConfig, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        tomli_w.dump(config_to_dict(cfg), fh)


def config_fields() -> dict:
    """Section -> accepted keys, for documentation and error messages."""
    return {k: sorted(v) for k, v in _SECTIONS.items()}


__all__ = ["ConfigError", "RunConfig", "load_config", "config_from_dict", "shipped_config_path",
           "resolve_config_path", "config_fields", "config_to_dict", "dump_config", "FIG2_N", "FIG3_N", "FIG3_DISTANCES",
           "MODES", "SCENARIOS"]
