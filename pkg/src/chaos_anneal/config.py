"""Run configuration files and manifests.

Configs are INI-style key-value files with one section per concern:

    [run]        experiment, seed, workers, out
    [params]     kind = physical | dimensionless, then the parameter keys
    [solver]     dt, t_end, sample_stride, n_traj, dims, snapshots, ...
    [noise]      enabled, n_bar_a, n_bar_b (langevin tier)
    [spectrum]   input, column, window selection, optional reference
    [wigner]     input, grid size

A manifest is the same format written back with every default resolved,
plus a [manifest] section carrying the package version and a [monitor]
section with run health numbers.  Replaying a manifest re-executes the
identical resolved configuration.
"""

import configparser
from dataclasses import dataclass, field

from . import __version__
from .errors import ConfigError
from .model import DimensionlessParams, PhysicalParams, to_dimensionless

EXPERIMENTS = ("meanfield", "langevin", "qjump", "spectrum", "wigner")

_PHYSICAL_KEYS = {
    "omega_m_hz": True, "quality_factor": True, "input_power_w": True,
    "kerr_hz": True, "kappa_hz": True, "kappa_in_hz": True,
    "drive_frequency_hz": True, "coupling_hz": True, "detuning_hz": True,
    "bath_temperature_k": False, "n_bar_a": False, "n_bar_b": False,
}
_DIMENSIONLESS_KEYS = {
    "delta": True, "kappa": True, "gamma": True, "coupling": True,
    "kerr": True, "drive": True, "n_bar_a": False, "n_bar_b": False,
}

SOLVER_DEFAULTS = {
    "dt": 1e-3,
    "t_end": 100.0,
    "sample_stride": 1,
    "n_traj": 1,
    "dim_a": 10,
    "dim_b": 10,
    "block_size": 1024,
    "p_target": 0.01,
    "store_trajectories": 0,
    "hist_bins_per_span": 120,
    "a0_re": 0.0, "a0_im": 0.0, "b0_re": 0.0, "b0_im": 0.0,
    "drop_divergent": False,
    "store_b_snapshots": False,
    "snapshot_times": (),
}


@dataclass
class RunConfig:
    """Fully resolved description of one experiment."""

    experiment: str
    seed: int = 0
    workers: int = 1
    out: str | None = None
    physical: PhysicalParams | None = None
    params: DimensionlessParams | None = None
    solver: dict = field(default_factory=dict)
    noise_enabled: bool = True
    noise_n_bar_a: float | None = None
    noise_n_bar_b: float | None = None
    spectrum: dict = field(default_factory=dict)
    wigner: dict = field(default_factory=dict)
    version: str = __version__

    def resolved_noise(self):
        """Occupations for the stochastic tier: explicit [noise] values
        win, otherwise the parameter set's thermal occupations."""
        n_a = self.noise_n_bar_a
        n_b = self.noise_n_bar_b
        if n_a is None:
            n_a = self.params.n_bar_a if self.params else 0.0
        if n_b is None:
            n_b = self.params.n_bar_b if self.params else 0.0
        return n_a, n_b


def _get(section, key, cast, default=None, required=False, where=""):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key `{key}`"
                              f"{' in ' + where if where else ''}", key=key)
        return default
    raw = section[key]
    try:
        if cast is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"invalid value for `{key}`: {raw!r}", key=key) from exc


def _parse_params(cp):
    if "params" not in cp:
        raise ConfigError("missing [params] section", key="params")
    section = cp["params"]
    kind = _get(section, "kind", str, default="dimensionless")
    if kind == "physical":
        keys = _PHYSICAL_KEYS
        kwargs = {}
        for key, required in keys.items():
            val = _get(section, key, float, required=required, where="[params]")
            if val is not None:
                kwargs[key] = val
        physical = PhysicalParams(**kwargs)
        return physical, to_dimensionless(physical)
    if kind == "dimensionless":
        kwargs = {}
        for key, required in _DIMENSIONLESS_KEYS.items():
            val = _get(section, key, float, required=required, where="[params]")
            if val is not None:
                kwargs[key] = val
        return None, DimensionlessParams(**kwargs)
    raise ConfigError(f"unknown params kind {kind!r}", key="kind")


def _parse_snapshot_times(raw):
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(float(tok) for tok in raw.replace(";", ",").split(",") if tok.strip())


def parse_config(path) -> RunConfig:
    """Parse a config or manifest file into a resolved RunConfig."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    if "run" not in cp:
        raise ConfigError("missing [run] section", key="run")
    run = cp["run"]
    experiment = _get(run, "experiment", str, required=True, where="[run]")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r} "
                          f"(expected one of {', '.join(EXPERIMENTS)})",
                          key="experiment")
    cfg = RunConfig(
        experiment=experiment,
        seed=_get(run, "seed", int, default=0),
        workers=_get(run, "workers", int, default=1),
        out=_get(run, "out", str, default=None),
    )

    if experiment in ("meanfield", "langevin", "qjump"):
        cfg.physical, cfg.params = _parse_params(cp)

    solver = dict(SOLVER_DEFAULTS)
    if "solver" in cp:
        sec = cp["solver"]
        for key, default in SOLVER_DEFAULTS.items():
            if key == "snapshot_times":
                if key in sec:
                    solver[key] = _parse_snapshot_times(sec[key])
            elif isinstance(default, bool):
                solver[key] = _get(sec, key, bool, default=default)
            elif isinstance(default, int):
                solver[key] = _get(sec, key, int, default=default)
            else:
                solver[key] = _get(sec, key, float, default=default)
    cfg.solver = solver

    if "noise" in cp:
        sec = cp["noise"]
        cfg.noise_enabled = _get(sec, "enabled", bool, default=True)
        cfg.noise_n_bar_a = _get(sec, "n_bar_a", float, default=None)
        cfg.noise_n_bar_b = _get(sec, "n_bar_b", float, default=None)

    if "spectrum" in cp:
        sec = cp["spectrum"]
        cfg.spectrum = {
            "input": _get(sec, "input", str,
                          required=(experiment == "spectrum"), where="[spectrum]"),
            "column": _get(sec, "column", str, default="photon_number"),
            "t_start": _get(sec, "t_start", float, default=None),
            "t_end": _get(sec, "t_end", float, default=None),
            "t_mid": _get(sec, "t_mid", float, default=None),
            "reference": _get(sec, "reference", str, default=None),
            "band_halfwidth_frac": _get(sec, "band_halfwidth_frac", float,
                                        default=0.1),
        }
    elif experiment == "spectrum":
        raise ConfigError("missing [spectrum] section", key="spectrum")

    if "wigner" in cp:
        sec = cp["wigner"]
        cfg.wigner = {
            "input": _get(sec, "input", str,
                          required=(experiment == "wigner"), where="[wigner]"),
            "points": _get(sec, "points", int, default=201),
            "half_width": _get(sec, "half_width", float, default=None),
        }
    elif experiment == "wigner":
        raise ConfigError("missing [wigner] section", key="wigner")

    if "manifest" in cp:
        cfg.version = _get(cp["manifest"], "version", str, default="unknown")
    return cfg


def manifest_text(cfg: RunConfig, outputs=(), monitor=None):
    """Render the resolved configuration as a replayable manifest."""
    lines = ["[manifest]", f"version={__version__}", ""]
    lines += ["[run]",
              f"experiment={cfg.experiment}",
              f"seed={cfg.seed}",
              f"workers={cfg.workers}",
              ""]
    lines.append("[params]")
    if cfg.physical is not None:
        lines.append("kind=physical")
        p = cfg.physical
        for key in sorted(_PHYSICAL_KEYS):
            val = getattr(p, key)
            if val is not None:
                lines.append(f"{key}={val!r}")
    elif cfg.params is not None:
        lines.append("kind=dimensionless")
        d = cfg.params
        for key in sorted(_DIMENSIONLESS_KEYS):
            lines.append(f"{key}={getattr(d, key)!r}")
    lines.append("")
    if cfg.params is not None:
        lines.append("# resolved dimensionless values")
        d = cfg.params
        for key in sorted(_DIMENSIONLESS_KEYS):
            lines.append(f"# {key}={getattr(d, key)!r}")
        lines.append("")

    lines.append("[solver]")
    for key in sorted(cfg.solver):
        val = cfg.solver[key]
        if key == "snapshot_times":
            val = ",".join(repr(float(t)) for t in val)
        elif isinstance(val, float):
            val = repr(val)
        lines.append(f"{key}={val}")
    lines.append("")

    lines.append("[noise]")
    lines.append(f"enabled={cfg.noise_enabled}")
    n_a, n_b = (cfg.resolved_noise() if cfg.params is not None
                else (cfg.noise_n_bar_a or 0.0, cfg.noise_n_bar_b or 0.0))
    lines.append(f"n_bar_a={n_a!r}")
    lines.append(f"n_bar_b={n_b!r}")
    lines.append("")

    for name, block in (("spectrum", cfg.spectrum), ("wigner", cfg.wigner)):
        if block:
            lines.append(f"[{name}]")
            for key in sorted(block):
                if block[key] is not None:
                    lines.append(f"{key}={block[key]}")
            lines.append("")

    if monitor:
        lines.append("[monitor]")
        for key in sorted(monitor):
            lines.append(f"{key}={monitor[key]}")
        lines.append("")

    if outputs:
        lines.append("[outputs]")
        for i, name in enumerate(sorted(outputs)):
            lines.append(f"file_{i}={name}")
        lines.append("")
    return "\n".join(lines) + "\n"
