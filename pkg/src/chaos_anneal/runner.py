"""Experiment orchestration: dispatch, artifact export, replay."""

import os
import warnings

import numpy as np

from . import __version__, analysis, hilbert, langevin, meanfield
from . import wigner as wigner_mod
from .config import RunConfig, manifest_text, parse_config
from .errors import ChaosAnnealError, ConfigError
from .meanfield import PhaseState
from .runio import (fmt, read_csv, read_density_matrix, write_csv,
                    write_density_matrix, write_density_matrix_csv,
                    write_grid_csv, write_sidecar)

MANIFEST_NAME = "manifest.ini"


def _param_meta(cfg: RunConfig):
    d = cfg.params
    meta = {}
    if d is not None:
        for key in ("delta", "kappa", "gamma", "coupling", "kerr", "drive",
                    "n_bar_a", "n_bar_b"):
            meta[key] = fmt(getattr(d, key))
    meta["seed"] = cfg.seed
    return meta


def _initial_state(cfg: RunConfig) -> PhaseState:
    s = cfg.solver
    return PhaseState(complex(s["a0_re"], s["a0_im"]),
                      complex(s["b0_re"], s["b0_im"]))


def _time_tag(t):
    return f"{t:g}"


def run_meanfield(cfg: RunConfig, out_dir):
    traj = meanfield.integrate_meanfield(
        cfg.params, _initial_state(cfg), cfg.solver["t_end"],
        cfg.solver["dt"], int(cfg.solver["sample_stride"]))
    path = os.path.join(out_dir, "trajectory.csv")
    write_csv(path, ["t", "re_a", "im_a", "re_b", "im_b", "intensity"],
              ((t, a.real, a.imag, b.real, b.imag, a.real ** 2 + a.imag ** 2)
               for t, a, b in zip(traj.times, traj.a, traj.b)),
              meta=_param_meta(cfg))
    return ["trajectory.csv"], {}


def run_langevin(cfg: RunConfig, out_dir):
    s = cfg.solver
    n_a, n_b = cfg.resolved_noise()
    noise = langevin.NoiseConfig(n_bar_a=n_a, n_bar_b=n_b, seed=cfg.seed,
                                 noise_enabled=cfg.noise_enabled)
    ens_cfg = langevin.EnsembleConfig(
        n_traj=int(s["n_traj"]), t_end=s["t_end"], dt=s["dt"],
        sample_stride=int(s["sample_stride"]),
        snapshot_times=tuple(s["snapshot_times"]),
        a0=complex(s["a0_re"], s["a0_im"]), b0=complex(s["b0_re"], s["b0_im"]),
        block_size=int(s["block_size"]),
        drop_divergent=bool(s["drop_divergent"]),
        store_b_snapshots=bool(s["store_b_snapshots"]))
    result = langevin.simulate_ensemble(cfg.params, noise, ens_cfg,
                                        workers=cfg.workers)
    files = ["ensemble.csv"]
    write_csv(os.path.join(out_dir, "ensemble.csv"),
              ["t", "re_mean_a", "im_mean_a", "re_mean_b", "im_mean_b",
               "mean_intensity", "photon_number", "mean_phonons",
               "var_a", "var_b", "re_cov_ab", "im_cov_ab",
               "re_cov_conj_ab", "im_cov_conj_ab"],
              ((t, ma.real, ma.imag, mb.real, mb.imag, mi, mi - 0.5, mp,
                va, vb, cab.real, cab.imag, ccb.real, ccb.imag)
               for t, ma, mb, mi, mp, va, vb, cab, ccb in zip(
                   result.times, result.mean_a, result.mean_b,
                   result.mean_intensity, result.mean_phonons,
                   result.var_a, result.var_b, result.cov_ab,
                   result.cov_conj_ab)),
              meta=_param_meta(cfg))

    for snap in result.snapshots:
        tag = _time_tag(snap.time)
        name = f"snapshot_t{tag}.csv"
        files.append(name)
        if snap.b is not None:
            write_csv(os.path.join(out_dir, name),
                      ["index", "re_a", "im_a", "re_b", "im_b"],
                      ((int(j), a.real, a.imag, b.real, b.imag)
                       for j, a, b in zip(snap.traj_indices, snap.a, snap.b)))
        else:
            write_csv(os.path.join(out_dir, name),
                      ["index", "re_a", "im_a"],
                      ((int(j), a.real, a.imag)
                       for j, a in zip(snap.traj_indices, snap.a)))
        h = langevin.default_bin_width(snap.a,
                                       int(s["hist_bins_per_span"]))
        hist = langevin.phase_space_histogram(snap.a, h,
                                              n_total=result.n_traj)
        grid_name = f"histogram_t{tag}.csv"
        meta_name = f"histogram_t{tag}.meta"
        files += [grid_name, meta_name]
        write_grid_csv(os.path.join(out_dir, grid_name), hist.density)
        write_sidecar(os.path.join(out_dir, meta_name), {
            "h": fmt(hist.h),
            "x_lo": fmt(hist.x_range[0]), "x_hi": fmt(hist.x_range[1]),
            "p_lo": fmt(hist.p_range[0]), "p_hi": fmt(hist.p_range[1]),
            "n_total": hist.n_total, "in_range": int(hist.counts.sum()),
            "seed": cfg.seed, "time": fmt(snap.time),
            "axes": "x=Re(a), p=Im(a)",
        })
    monitor = {"n_counted": result.n_counted,
               "n_divergent": len(result.divergent)}
    return files, monitor


def run_qjump(cfg: RunConfig, out_dir):
    s = cfg.solver
    dims = hilbert.FockDims(int(s["dim_a"]), int(s["dim_b"]))
    psi0 = hilbert.product_coherent_state(
        dims, complex(s["a0_re"], s["a0_im"]), complex(s["b0_re"], s["b0_im"]))
    jump_cfg = hilbert.JumpEnsembleConfig(
        n_traj=int(s["n_traj"]), t_end=s["t_end"], dt=s["dt"],
        sample_stride=int(s["sample_stride"]),
        snapshot_times=tuple(s["snapshot_times"]),
        block_size=int(s["block_size"]), p_target=s["p_target"],
        store_trajectories=int(s["store_trajectories"]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # truncation warning goes in manifest
        result = hilbert.simulate_jump_ensemble(psi0, cfg.params, dims,
                                                jump_cfg, seed=cfg.seed,
                                                workers=cfg.workers)
    files = ["expectations.csv"]
    write_csv(os.path.join(out_dir, "expectations.csv"),
              ["t", "mean_n_a", "se_n_a", "mean_n_b", "se_n_b"],
              zip(result.times, result.mean_n_a, result.se_n_a,
                  result.mean_n_b, result.se_n_b),
              meta=dict(_param_meta(cfg), dim_a=dims.dim_a, dim_b=dims.dim_b))
    for j, series in result.sample_trajectories:
        name = f"trajectory_{j:03d}.csv"
        files.append(name)
        write_csv(os.path.join(out_dir, name), ["t", "n_a"],
                  zip(result.times, series))
    for t, rho in sorted(result.rho_cavity.items()):
        tag = _time_tag(t)
        name = f"rho_cavity_t{tag}.bin"
        files.append(name)
        write_density_matrix(os.path.join(out_dir, name), rho)
        if dims.dim_a <= 32:
            csv_name = f"rho_cavity_t{tag}.csv"
            files.append(csv_name)
            write_density_matrix_csv(os.path.join(out_dir, csv_name), rho)
    monitor = {
        "truncation_max_a": fmt(result.truncation_max_a),
        "truncation_max_b": fmt(result.truncation_max_b),
        "truncation_warning": result.truncation_warning,
        "basis_ordering": "index = n_a * dim_b + n_b",
    }
    return files, monitor


def run_spectrum(cfg: RunConfig, out_dir):
    spec_cfg = cfg.spectrum
    meta, cols = read_csv(spec_cfg["input"])
    column = spec_cfg["column"]
    if column not in cols:
        raise ConfigError(f"input file has no column `{column}`", key="column")
    times = cols["t"]
    values = cols[column]
    files = []
    monitor = {}

    def export(name, spec):
        files.append(name)
        write_csv(os.path.join(out_dir, name), ["omega", "s", "s_normalized"],
                  zip(spec.frequencies, spec.magnitude, spec.normalized),
                  meta={"window_start": fmt(spec.window[0]),
                        "window_end": fmt(spec.window[1]),
                        "column": column, "source": spec_cfg["input"]})

    if spec_cfg.get("t_mid") is not None:
        first, second = analysis.split_window_spectra(times, values,
                                                      spec_cfg["t_mid"])
        export("spectrum_first.csv", first)
        export("spectrum_second.csv", second)
        main_spec = second
    else:
        window = None
        if spec_cfg.get("t_start") is not None or spec_cfg.get("t_end") is not None:
            window = (spec_cfg.get("t_start") or times[0],
                      spec_cfg.get("t_end") or times[-1])
        main_spec = analysis.intensity_spectrum(times, values, window=window)
        export("spectrum.csv", main_spec)

    if spec_cfg.get("reference"):
        _, ref_cols = read_csv(spec_cfg["reference"])
        ref = analysis.Spectrum(ref_cols["omega"], ref_cols["s"],
                                window=main_spec.window)
        ratio = analysis.sideband_suppression_ratio(
            ref, main_spec,
            band_halfwidth_frac=spec_cfg["band_halfwidth_frac"])
        monitor["sideband_suppression_ratio"] = fmt(ratio)
        monitor["fundamental"] = fmt(analysis.find_fundamental(ref))
    return files, monitor


def run_wigner(cfg: RunConfig, out_dir):
    w_cfg = cfg.wigner
    rho = read_density_matrix(w_cfg["input"])
    points = int(w_cfg["points"])
    if w_cfg.get("half_width"):
        grid = np.linspace(-w_cfg["half_width"], w_cfg["half_width"], points)
        x_vals, p_vals = grid, grid.copy()
    else:
        x_vals, p_vals = wigner_mod.default_grid(rho, points=points)
    grid = wigner_mod.wigner_from_density(rho, x_vals, p_vals)
    files = ["wigner.csv"]
    write_csv(os.path.join(out_dir, "wigner.csv"), ["x", "p", "w"],
              ((x, p, grid.values[i, j])
               for i, x in enumerate(grid.x_values)
               for j, p in enumerate(grid.p_values)),
              meta={"source": w_cfg["input"],
                    "convention": "x=sqrt(2)Re(alpha), p=sqrt(2)Im(alpha)"})
    monitor = {
        "min_w": fmt(grid.min_value),
        "negative_volume": fmt(grid.negative_volume),
        "riemann_sum": fmt(grid.riemann_sum),
        "support_warning": grid.support_warning,
    }
    return files, monitor


_DISPATCH = {
    "meanfield": run_meanfield,
    "langevin": run_langevin,
    "qjump": run_qjump,
    "spectrum": run_spectrum,
    "wigner": run_wigner,
}


def execute(cfg: RunConfig, out_dir):
    """Run one resolved configuration into ``out_dir``.

    Writes every artifact plus a manifest echoing the configuration;
    raises ChaosAnnealError subclasses on failure.
    """
    os.makedirs(out_dir, exist_ok=True)
    files, monitor = _DISPATCH[cfg.experiment](cfg, out_dir)
    manifest = manifest_text(cfg, outputs=files, monitor=monitor)
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8",
              newline="\n") as f:
        f.write(manifest)
    return files


def run(config_path, out_dir=None, overrides=None, expect_experiment=None):
    """Parse a config file, apply CLI overrides, and execute it."""
    cfg = parse_config(config_path)
    if expect_experiment and cfg.experiment != expect_experiment:
        raise ConfigError(
            f"config declares experiment `{cfg.experiment}` but the "
            f"`{expect_experiment}` subcommand was invoked", key="experiment")
    if overrides:
        for key, value in overrides.items():
            if value is None:
                continue
            if key in ("seed", "workers", "out"):
                setattr(cfg, key, value)
            elif key == "dims":
                cfg.solver["dim_a"], cfg.solver["dim_b"] = value
            else:
                cfg.solver[key] = value
    target = out_dir or cfg.out
    if target is None:
        raise ConfigError("no output directory given (flag --out or "
                          "[run] out)", key="out")
    return execute(cfg, target)


def replay(manifest_path, out_dir, seed=None, workers=None):
    """Re-execute a manifest; stochastic outputs are byte-identical
    unless the seed is overridden."""
    cfg = parse_config(manifest_path)
    if cfg.version != __version__:
        warnings.warn(
            f"manifest written by version {cfg.version}, replaying with "
            f"{__version__}; outputs may differ", stacklevel=2)
    if seed is not None:
        cfg.seed = seed
    if workers is not None:
        cfg.workers = workers
    return execute(cfg, out_dir)
