"""Command-line experiment runner: ``python -m dckerr <subcommand> ...``.

Each run reads one INI config, writes its artifacts into the output
directory (config ``[run] output_dir``, overridden by the ``OUTPUT_DIR``
environment variable or ``--output-dir``) and finishes with a
``manifest.json`` hashing every file there.
"""

from __future__ import annotations

import argparse
import configparser
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import direct1d, inversion, io, kerrcell, profiles, stationary
from .geometry import Grid3D
from .media import GaussianBumps, line_integrals


class ConfigError(ValueError):
    pass


class Config:
    """INI config with typed getters that report the offending line on failure."""

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.is_file():
            raise ConfigError(f"{self.path}: config file not found")
        text = self.path.read_text()
        self.parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            self.parser.read_string(text, source=str(self.path))
        except configparser.Error as exc:
            raise ConfigError(f"{self.path}: {exc}") from None
        self.lines = {}
        section = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            m = re.match(r"\s*\[([^\]]+)\]", line)
            if m:
                section = m.group(1).strip()
                continue
            m = re.match(r"\s*([^=:#;\s][^=:]*?)\s*[=:]", line)
            if m and section is not None:
                self.lines[(section, m.group(1).strip().lower())] = lineno

    def where(self, section, key):
        line = self.lines.get((section, key.lower()))
        return f"{self.path}:{line}" if line else f"{self.path}"

    def fail(self, section, key, msg):
        raise ConfigError(f"{self.where(section, key)}: [{section}] {key}: {msg}")

    def has(self, section, key):
        return self.parser.has_option(section, key)

    def raw(self, section, key, default=None):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key)
        if default is None:
            raise ConfigError(f"{self.path}: missing key [{section}] {key}")
        return default

    def float(self, section, key, default=None, positive=False, nonneg=False):
        val = self.raw(section, key, None if default is None else str(default))
        try:
            x = float(val)
        except ValueError:
            self.fail(section, key, f"expected a number, got {val!r}")
        if not np.isfinite(x):
            self.fail(section, key, "value must be finite")
        if positive and x <= 0:
            self.fail(section, key, "value must be positive")
        if nonneg and x < 0:
            self.fail(section, key, "value must be non-negative")
        return x

    def int(self, section, key, default=None, minimum=None):
        val = self.raw(section, key, None if default is None else str(default))
        try:
            x = int(val)
        except ValueError:
            self.fail(section, key, f"expected an integer, got {val!r}")
        if minimum is not None and x < minimum:
            self.fail(section, key, f"value must be at least {minimum}")
        return x

    def floats(self, section, key, default=None):
        val = self.raw(section, key, default)
        try:
            out = [_parse_number(v) for v in re.split(r"[,\s]+", val.strip()) if v]
        except ValueError:
            self.fail(section, key, f"expected a list of numbers, got {val!r}")
        if not out:
            self.fail(section, key, "list must be non-empty")
        return out

    def h_values(self, section, key="h_sweep", default=None):
        hs = self.floats(section, key, default)
        for h in hs:
            if not 0 < h < 1:
                self.fail(section, key, f"h = {h} must lie in (0, 1)")
        return hs

    def bool(self, section, key, default=False):
        if not self.parser.has_option(section, key):
            return default
        try:
            return self.parser.getboolean(section, key)
        except ValueError:
            self.fail(section, key, "expected a boolean")


def _parse_number(token):
    if "/" in token:
        num, den = token.split("/")
        return float(num) / float(den)
    return float(token)


def _bumps(cfg, section="medium"):
    """Parse ``bumps = a,cx,cy,cz,s; ...`` or draw a seeded two-bump phantom."""
    if cfg.has(section, "bumps"):
        txt = cfg.raw(section, "bumps").strip()
        if txt.lower() in ("", "none", "zero"):
            return np.zeros((0, 5))
        rows = []
        for chunk in txt.split(";"):
            if not chunk.strip():
                continue
            vals = [float(v) for v in chunk.split(",")]
            if len(vals) != 5:
                cfg.fail(section, "bumps", "each bump needs five numbers a,cx,cy,cz,s")
            rows.append(vals)
        return np.array(rows)
    rng = np.random.default_rng(cfg.int("run", "seed", 0))
    amp = rng.uniform(0.5, 1.0, 2)
    ang = rng.uniform(0, 2 * np.pi, 2)
    rad = rng.uniform(0.3, 0.6, 2)
    width = rng.uniform(0.25, 0.4, 2)
    return np.column_stack([amp, rad * np.cos(ang), rad * np.sin(ang), np.zeros(2), width])


def _phantom(cfg, section="medium"):
    return GaussianBumps(_bumps(cfg, section), cfg.float(section, "support_radius", 1.8, positive=True),
                         cfg.float(section, "domain_radius", 2.0, positive=True))


def _medium1d(cfg):
    s = "medium"
    return direct1d.Medium1D(
        kind=cfg.raw(s, "kind", "gaussian"), amplitude=cfg.float(s, "amplitude", 1.6),
        center=cfg.float(s, "center", 10.0), width=cfg.float(s, "width", 0.5, positive=True),
        start=cfg.float(s, "start", 8.0), stop=cfg.float(s, "stop", 12.0), ramp=cfg.float(s, "ramp", 0.2,
                                                                                          positive=True))


def _beam1d(cfg, section):
    return direct1d.Beam1D(a2=cfg.float(section, "a2", 1.0), a3=cfg.float(section, "a3", 1.0),
                           launch=cfg.float(section, "launch", 3.0),
                           half_length=cfg.float(section, "half_length", 1.5, positive=True))


def _output_dir(cfg, override=None):
    out = override or os.environ.get("OUTPUT_DIR") or (cfg.raw("run", "output_dir", "out") if cfg else "out")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------- commands

def cmd_stationary(cfg, out):
    s = "stationary"
    R0 = cfg.float(s, "half_width", 2.5, positive=True)
    n = cfg.int(s, "n", 64, minimum=5)
    e0 = cfg.float(s, "e0", 1.0, nonneg=True)
    hs = cfg.h_values(s, default="0.04, 0.02, 0.01")
    tol = cfg.float(s, "tol", 1e-12, positive=True)
    max_iter = cfg.int(s, "max_iter", 50, minimum=1)
    grid = Grid3D.cube(R0, n)
    chi = _phantom(cfg)
    base = stationary.DirichletProblem(grid, stationary.linear_potential(e0), chi, hs[0])
    u_f = stationary.harmonic_extension(base)
    terms = stationary.expansion_terms(base, 1, u_f=u_f)
    io.write_grid(out / "u_f.bin", u_f, grid.origin, grid.spacing, "u_f")
    io.write_grid(out / "psi1.bin", terms[1], grid.origin, grid.spacing, "psi1")
    rows = []
    for i, h in enumerate(hs):
        prob = base.with_h(h)
        sol = stationary.fixed_point_solve(prob, max_iter=max_iter, tol=tol, u_f=u_f)
        rem = stationary.expansion_remainder(prob, sol, terms)
        io.write_grid(out / f"psi_{i}.bin", sol.psi, grid.origin, grid.spacing, f"psi(h={h!r})")
        late = max(sol.ratios[1:], default=0.0)
        rows.append([h, sol.iterations, sol.residual_norm, rem, late])
    rows = np.array(rows)
    factors = (rows[:-1, 3] / rows[1:, 3]).tolist()
    io.write_csv(out / "stationary.csv", ["h", "iterations", "residual", "remainder", "max_ratio_after_2"], rows)
    return {"remainder_factors": factors, "max_residual": float(rows[:, 2].max()),
            "max_ratio_after_2": float(rows[:, 4].max())}


def cmd_forward(cfg, out):
    s = "forward"
    h = cfg.float(s, "h", 0.02, positive=True)
    e0 = cfg.float(s, "e0", 1.0, nonneg=True)
    n_pix = cfg.int(s, "n_pixels", 64, minimum=2)
    n_t = cfg.int(s, "n_times", 8, minimum=1)
    chi = _phantom(cfg)
    R = chi.domain_radius
    beam = profiles.make_beam(r0=R, a2=cfg.float(s, "a2", 1.0), a3=cfg.float(s, "a3", 1.0), h=h,
                              launch=cfg.float(s, "launch", -2.5), length=cfg.float(s, "half_length", 0.4))
    center_t = R - beam.longitudinal.center
    times = center_t + beam.longitudinal.half_width * np.linspace(-0.5, 0.5, n_t)
    x2 = np.linspace(-R, R, n_pix)
    pts = np.zeros((n_t, n_pix, 3))
    pts[..., 0] = R
    pts[..., 1] = x2
    E = profiles.evaluate_leading_field(beam, chi, e0, times[:, None], pts)
    free = profiles.evaluate_leading_field(beam, None, e0, times[:, None], pts)
    tau = 0.5 * e0**2 * line_integrals(chi, np.column_stack([np.zeros(n_pix), x2, np.zeros(n_pix)]),
                                                 profiles.E1)
    io.write_grid(out / "detector_field.bin", E, (times[0], -R, 0.0),
                  (times[1] - times[0] if n_t > 1 else 1.0, x2[1] - x2[0], 1.0), "E_detector[t, x2, component]")
    io.write_csv(out / "detector_tau.csv", ["x2", "tau"], np.column_stack([x2, tau]))
    zero = bool(np.all(tau == 0))
    return {"zero_retardation": zero, "max_tau": float(np.max(np.abs(tau))),
            "max_deviation_from_free_beam": float(np.max(np.abs(E - free)))}


def cmd_fdtd(cfg, out):
    s = "fdtd"
    h = cfg.float(s, "h", 0.01, positive=True)
    if not h < 1:
        cfg.fail(s, "h", "h must lie in (0, 1)")
    e0 = cfg.float(s, "e0", 1.0, nonneg=True)
    beam = _beam1d(cfg, s)
    medium = _medium1d(cfg)
    trace = direct1d.run_experiment(beam, medium, e0, h, T=cfg.float(s, "T", 15.0, positive=True),
                                    detector=cfg.float(s, "detector", 16.0),
                                    length=cfg.float(s, "length", 20.0, positive=True))
    io.write_trace(out / "trace.csv", trace)
    tau = direct1d.tau_infinity(medium, e0)
    summary = {"tau_infinity": tau, "samples_per_period": trace.samples_per_period}
    if beam.a2:
        summary["delta2"] = direct1d.fit_phase(trace, beam, 2)
    if beam.a3:
        summary["delta3"] = direct1d.fit_phase(trace, beam, 3)
    return summary


def cmd_extract(trace_path, window_arg, out):
    trace = io.read_trace(trace_path)
    wpath = Path(window_arg)
    if wpath.is_file():
        w = io.read_json(wpath)
        window = inversion.WindowFunction(float(w["start"]), float(w["stop"]), int(w.get("power", 4)))
    elif window_arg in ("auto", ""):
        window = inversion.arrival_window(trace)
    else:
        try:
            t0, t1 = (float(v) for v in window_arg.split(","))
        except ValueError:
            raise ConfigError(f"--window: expected a JSON file or 't0,t1', got {window_arg!r}") from None
        window = inversion.WindowFunction(t0, t1)
    c, s_ = inversion.extract_cos_sin_tau(trace, window)
    result = {"cos_tau": c, "sin_tau": s_, "tau": float(np.arctan2(s_, c)),
              "window": {"start": window.start, "stop": window.stop, "power": window.power},
              "sign_convention": inversion.SIGN_CONVENTION}
    io.write_json(out / "extract.json", result)
    return result


def cmd_sinogram(cfg, out):
    s = "sinogram"
    chi = _phantom(cfg)
    e0 = cfg.float(s, "e0", 3.0, positive=True)
    setup = inversion.ForwardSetup(h=cfg.float(s, "h", 0.02, positive=True),
                                   detector=cfg.float(s, "detector", chi.domain_radius),
                                   launch=cfg.float(s, "launch", -chi.domain_radius - 0.5),
                                   half_length=cfg.float(s, "half_length", 0.4, positive=True),
                                   samples_per_period=cfg.int(s, "samples_per_period", 24, minimum=20))
    z = cfg.floats(s, "z", "-0.2, 0.0, 0.2")
    sino = inversion.synthetic_sinogram(chi, e0, cfg.int(s, "n_angles", 180, minimum=8),
                                        cfg.int(s, "n_offsets", 256, minimum=2), z=z, setup=setup)
    phantom = {"bumps": chi.bumps, "support_radius": chi.support_radius, "domain_radius": chi.domain_radius}
    io.write_sinogram(out / "sinogram.bin", sino, {"phantom": phantom})
    return {"pythagorean_defect": sino.meta["pythagorean_defect"], "tau_error": sino.meta["tau_error"]}


def cmd_reconstruct(sino_path, out_path, out):
    sino = io.read_sinogram(sino_path)
    recon = inversion.fbp_reconstruct(sino)
    out_path = Path(out_path)
    if not out_path.is_absolute():
        out_path = out / out_path
    io.write_grid(out_path, recon.slice_values, recon.grid.origin,
                  (recon.grid.spacing[0], recon.grid.spacing[1],
                   (sino.z[-1] - sino.z[0]) / max(len(sino.z) - 1, 1)), "chi_reconstructed")
    summary = {"output": out_path.name}
    ph = sino.meta.get("phantom")
    if ph:
        field = GaussianBumps(np.array(ph["bumps"]).reshape(-1, 5), ph["support_radius"], ph["domain_radius"])
        summary["relative_l2_error"] = inversion.relative_error_on_slices(recon, field, field.support_radius)
    return summary


def cmd_kerrcell(cfg, out):
    s = "kerrcell"
    cell = kerrcell.CellSpec(cfg.float(s, "a2", 1.0), cfg.float(s, "a3", 1.0), cfg.float(s, "d", 2.0, positive=True),
                             cfg.float(s, "e0", 1.0, nonneg=True), cfg.float(s, "chi", np.pi / 2, nonneg=True))
    taus = np.linspace(0.0, np.pi, cfg.int(s, "tau_points", 3142, minimum=3))
    env = kerrcell.transmission_envelope(cell.a2, cell.a3, taus)
    io.write_csv(out / "tau_scan.csv", ["tau", "envelope"], np.column_stack([taus, env]))
    e0s = np.linspace(0.0, cfg.float(s, "e0_max", 3.0, positive=True), cfg.int(s, "e0_points", 301, minimum=2))
    io.write_csv(out / "e0_scan.csv", ["e0", "envelope"], kerrcell.e0_scan(cell, e0s))
    scan = kerrcell.optimal_tau_scan(cell, taus)
    summary = {"tau_at_max": scan.tau_at_max, "degenerate": scan.degenerate}
    if cell.chi > 0:
        e_star = kerrcell.e0_at_first_max(cell.chi, cell.d)
        summary["e0_at_first_max"] = e_star
        summary["chi_round_trip"] = kerrcell.chi_from_first_max(e_star, cell.d)
    if cfg.bool(s, "simulate", True):
        h = cfg.float(s, "h", 0.02, positive=True)
        res = kerrcell.simulate_cell(cell, h)
        summary.update({"h": h, "tau_infinity": res.tau, "simulated_envelope": res.simulated,
                        "analytic_envelope": res.analytic, "ellipse": list(res.ellipse)})
        io.write_csv(out / "cell.csv", ["h", "tau", "simulated", "analytic", "major", "minor"],
                     [[h, res.tau, res.simulated, res.analytic, res.ellipse[0], res.ellipse[1]]])
    return summary


def cmd_convergence(cfg, out):
    s = "convergence"
    hs = cfg.h_values(s, default="1/50, 1/100, 1/200")
    e0 = cfg.float(s, "e0", 1.0, nonneg=True)
    beam = _beam1d(cfg, s)
    study = direct1d.convergence_study(_medium1d(cfg), e0, hs, beam=beam)
    rows = []
    for i, (h, d2, d3, e2, e3) in enumerate(study["rows"]):
        o2 = o3 = np.nan
        if i > 0:
            hp, _, _, e2p, e3p = study["rows"][i - 1]
            o2 = np.log(e2p / e2) / np.log(hp / h)
            o3 = np.log(e3p / e3) / np.log(hp / h)
        rows.append([h, d2, d3, e2, e3, o2, o3])
    io.write_csv(out / "convergence.csv", ["h", "delta2", "delta3", "err_tau", "err_3tau", "order_tau",
                                           "order_3tau"], rows)
    return {"tau_infinity": study["tau"], "C": study["C"], "order_tau": study["order2"],
            "order_3tau": study["order3"]}


CONFIG_COMMANDS = {
    "stationary": cmd_stationary, "forward": cmd_forward, "fdtd": cmd_fdtd, "sinogram": cmd_sinogram,
    "kerrcell": cmd_kerrcell, "convergence": cmd_convergence,
}


def build_parser():
    p = argparse.ArgumentParser(prog="dckerr", description="DC Kerr effect simulation and inversion experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in CONFIG_COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
    sp = sub.add_parser("extract")
    sp.add_argument("--trace", required=True)
    sp.add_argument("--window", default="auto", help="JSON file {start, stop, power} or 't0,t1'")
    sp = sub.add_parser("reconstruct")
    sp.add_argument("--sinogram", required=True)
    sp.add_argument("--out", required=True)
    for sp in sub.choices.values():
        sp.add_argument("--threads", type=int, default=1, help="cap on FFT worker threads (kernels are serial)")
        sp.add_argument("--output-dir", default=None)
    return p


def main(argv=None):
    from scipy import fft

    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        with fft.set_workers(args.threads):
            if args.command in CONFIG_COMMANDS:
                cfg = Config(args.config)
                out = _output_dir(cfg, args.output_dir)
                summary = CONFIG_COMMANDS[args.command](cfg, out)
            elif args.command == "extract":
                out = _output_dir(None, args.output_dir)
                summary = cmd_extract(args.trace, args.window, out)
            else:
                out = _output_dir(None, args.output_dir)
                summary = cmd_reconstruct(args.sinogram, args.out, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    io.write_manifest(out, args.command, summary)
    for k, v in summary.items():
        print(f"{k}: {v}")
    return 0
