"""Command-line experiment runner.

    spinlab <subcommand> --config FILE [--out DIR] [--threads K] [--seed N]

Configs are ``key = value`` files.  Every output file starts with ``#``
provenance lines echoing the version, the seed and all parameters, and
contains no timestamps, so equal inputs give byte-identical outputs.
Exit status: 0 success, 1 property violation, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .defect import (
    energy_defect_batch,
    q_minus,
    q_minus_direct,
    q_minus_parts,
    q_plus,
    smoothing_check,
    uniform_bound,
)
from .lattice import Box, in_wedge, preimage_multiplicity_bound, wedge_map_many
from .model import BoxTooSmallError, ModelSpec, parse_key_values
from .montecarlo import (
    ChainState,
    batch_means,
    lemma34_diagnostic,
    defect_tail_check,
    load_chain,
    make_rng,
    sample_chain,
    save_chain,
)
from .scaling import benchmark_scale, fit_loglog_slope, scaling_point
from .spin import DeformationProfile, SpinConfig, random_unit_spin

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2

MODEL_KEYS = {"d": "1", "n": "2", "s": "1.5", "lambda": "1.0", "beta": "1.0", "J": "0.0",
              "potential": "zero", "M": "64", "R_cut": "1000", "seed": "0"}

EXPERIMENT_KEYS = {
    "bound-suite": {"grid": "32:8,64:8", "samples": "200", "margin": "8", "aligned": "1"},
    "scaling-grid": {"L_list": "64,128,256,512,1024", "a_rule": "ratio:16", "exact": "1"},
    "mc-study": {"M": "128", "L": "32", "a": "8", "measurements": "1000", "every": "10",
                 "burn_in": "1000", "chains": "1", "t_frac": "0.25", "zeta": "0.1",
                 "lambda_over_c": "1.0", "start": "aligned", "resume": "", "snapshot": "1"},
    "wedge-check": {"d_list": "1,2,3", "R": "10"},
    "smoothing-scan": {"L": "512", "a": "64", "ell": "4", "separations": "128,256,512,1024",
                       "samples": "20", "start": "uniform"},
}

FILE_NAMES = {"bound-suite": "bound_suite.csv", "scaling-grid": "scaling_grid.csv",
              "mc-study": "mc_study.csv", "wedge-check": "wedge_check.csv",
              "smoothing-scan": "smoothing_scan.csv"}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# Config handling


def load_config(command: str, text: str, overrides: dict) -> dict:
    try:
        raw = parse_key_values(text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    defaults = dict(MODEL_KEYS)
    defaults.update(EXPERIMENT_KEYS[command])
    unknown = sorted(set(raw) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    cfg = dict(defaults)
    cfg.update(raw)
    cfg.update({k: str(v) for k, v in overrides.items() if v is not None})
    return cfg


def model_spec(cfg: dict) -> ModelSpec:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return ModelSpec.from_mapping({k: cfg[k] for k in MODEL_KEYS})
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad model parameters: {exc}") from exc


def _ints(text: str, key: str) -> list[int]:
    try:
        vals = [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated integers") from exc
    if not vals:
        raise ConfigError(f"{key} is empty")
    return vals


def _int(cfg, key):
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {cfg[key]!r}") from exc


def _float(cfg, key):
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {cfg[key]!r}") from exc


def _grid_pairs(text: str) -> list[tuple[int, int]]:
    pairs = []
    for item in text.replace(" ", "").split(","):
        if not item:
            continue
        try:
            L, a = item.split(":")
            pairs.append((int(L), int(a)))
        except ValueError as exc:
            raise ConfigError(f"grid entry {item!r} is not L:a") from exc
    if not pairs:
        raise ConfigError("grid is empty")
    return pairs


def _profile(L, a, d) -> DeformationProfile:
    try:
        return DeformationProfile(L, a, d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, command: str, cfg: dict, columns, rows, footer=()) -> None:
    buf = io.StringIO()
    buf.write(f"# spinlab {__version__} {command}\n")
    buf.write(f"# seed={cfg['seed']}\n")
    for k in sorted(cfg):
        buf.write(f"# {k}={cfg[k]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    for line in footer:
        buf.write(f"# {line}\n")
    path.write_text(buf.getvalue())


# ---------------------------------------------------------------------------
# Subcommands


def run_bound_suite(cfg: dict, out: Path, threads: int = 1) -> int:
    """Check ``|Delta| <= U`` on random (and aligned) configurations and the Q- split."""
    spec = model_spec(cfg)
    samples = _int(cfg, "samples")
    margin = _int(cfg, "margin")
    rows, footer = [], []
    violations = 0
    for gi, (L, a) in enumerate(_grid_pairs(cfg["grid"])):
        prof = _profile(L, a, spec.d)
        box = Box(spec.d, L + spec.r + margin)
        rng = make_rng(spec.seed, gi)
        U, cert = uniform_bound(prof, spec, box.N)
        vals = random_unit_spin(rng, spec.n, size=samples * len(box)).reshape(samples, len(box), spec.n)
        if cfg["aligned"] == "1":
            e1 = np.zeros((1, len(box), spec.n))
            e1[..., 0] = 1.0
            vals = np.concatenate([vals, e1])
        deltas = []
        for start in range(0, len(vals), 64):
            deltas.extend(energy_defect_batch(vals[start:start + 64], box, prof, spec))
        for k, dv in enumerate(deltas):
            ok = abs(dv) <= U * (1 + 1e-12)
            violations += not ok
            rows.append([L, a, k, dv, U, U - abs(dv), int(ok)])
        if spec.lam:
            parts = q_minus_parts(prof, spec.kernel, box.N)
            direct = q_minus_direct(prof, spec.kernel, box.N)
            rel = abs(parts.total - direct) / max(abs(direct), 1e-300)
            footer.append(f"decomposition L={L} a={a} parts={parts.total!r} direct={direct!r} "
                          f"rel_err={rel:.3e} tail_q2={parts.tails[0].tail_bound!r} "
                          f"tail_q4={parts.tails[1].tail_bound!r}")
            if rel > 1e-9:
                violations += 1
    footer.append(f"violations={violations}")
    write_csv(out / FILE_NAMES["bound-suite"], "bound-suite", cfg,
              ["L", "a", "sample", "delta", "u_bound", "margin", "ok"], rows, footer)
    return EXIT_VIOLATION if violations else EXIT_OK


def _a_for(rule: str, L: int) -> int:
    kind, _, arg = rule.partition(":")
    try:
        if kind == "ratio":
            return max(1, L // int(arg))
        if kind == "fixed":
            return int(arg)
        if kind == "sqrt":
            return max(1, int(round(math.sqrt(L))))
    except ValueError as exc:
        raise ConfigError(f"bad a_rule {rule!r}") from exc
    raise ConfigError(f"unknown a_rule {rule!r} (use ratio:k, fixed:a or sqrt)")


def run_scaling_grid(cfg: dict, out: Path, threads: int = 1) -> int:
    spec = model_spec(cfg)
    d, s = spec.d, spec.s
    Ls = _ints(cfg["L_list"], "L_list")
    exact = cfg["exact"] == "1"
    rows = []
    for L in sorted(Ls):
        a = _a_for(cfg["a_rule"], L)
        prof = _profile(L, a, d)
        try:
            sp = scaling_point(d, s, L, a)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        qm, cert = q_minus(prof, spec.kernel, None if exact else spec.R_cut)
        qp = q_plus(prof, max(spec.r, 1))
        U = spec.potential.phi2_norm_bound * qp + abs(spec.lam) * qm
        rows.append([L, a, sp.q1, sp.q2, sp.q3, sp.q4, sp.q2_L, sp.q3_L, qp, qm, U,
                     sp.i_value, sp.regime.value, qm / sp.i_value, qp * a / L ** (d - 1),
                     cert.tail_bound])
    footer = []
    if len(rows) >= 3:
        for name, col in (("Q_minus", 9), ("U", 10), ("I", 11)):
            pts = [(r[0], r[col]) for r in rows if r[col] > 0]
            if len(pts) >= 3:
                slope, icpt, res = fit_loglog_slope(pts)
                footer.append(f"fit {name} vs L: slope={slope:.6f} intercept={icpt:.6f} rms={res:.3e}")
        ratios = [r[13] for r in rows]
        footer.append(f"Q_minus/I bracket: min={min(ratios):.6g} max={max(ratios):.6g} "
                      f"spread={max(ratios) / min(ratios):.4f}")
    write_csv(out / FILE_NAMES["scaling-grid"], "scaling-grid", cfg,
              ["L", "a", "q1", "q2_inf", "q3_inf", "q4", "q2_L", "q3_L", "Q_plus", "Q_minus",
               "U", "I", "regime", "Q_minus_over_I", "Q_plus_a_over_Ld1", "tail"], rows, footer)
    return EXIT_OK


def _run_one_chain(k: int, cfg: dict, spec: ModelSpec, out: Path):
    resume = cfg["resume"]
    L, a = _int(cfg, "L"), _int(cfg, "a")
    prof = _profile(L, a, spec.d)
    if resume:
        path = Path(resume.replace("{chain}", str(k)))
        if not path.exists():
            raise ConfigError(f"snapshot {path} not found")
        state = load_chain(path)
        burn = 0
    else:
        box = Box(spec.d, spec.M)
        if box.N - spec.r < L:
            raise ConfigError(f"box half-side M={spec.M} too small for L={L}")
        if cfg["start"] == "aligned":
            cfg0 = SpinConfig.aligned(box, spec.n)
        elif cfg["start"] == "uniform":
            cfg0 = SpinConfig.uniform(box, spec.n, make_rng(spec.seed, 10_000 + k))
        else:
            raise ConfigError("start must be 'aligned' or 'uniform'")
        state = ChainState(cfg0, spec, seed=spec.seed, stream=k)
        burn = _int(cfg, "burn_in")
    series = sample_chain(state, _int(cfg, "measurements"), _int(cfg, "every"), burn, prof)
    if cfg["snapshot"] == "1":
        save_chain(out / f"chain_{k}.json", state)
    return state, series, prof


def run_mc_study(cfg: dict, out: Path, threads: int = 1) -> int:
    spec = model_spec(cfg)
    chains = _int(cfg, "chains")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda k: _run_one_chain(k, cfg, spec, out), range(chains)))
    summary = {"version": __version__, "seed": spec.seed, "params": dict(sorted(cfg.items())),
               "chains": []}
    violations = 0
    for k, (state, series, prof) in enumerate(results):
        mags = np.asarray(series.magnetization)
        rows = [[i, e, *m, dl] for i, (e, m, dl) in
                enumerate(zip(series.energy, mags, series.delta))]
        cols = ["measurement", "energy"] + [f"m{c}" for c in range(spec.n)] + ["delta"]
        write_csv(out / f"mc_chain_{k}.csv", "mc-study", cfg, cols, rows)
        U, cert = uniform_bound(prof, spec, state.box.N)
        entry = {"chain": k, "sweeps": state.sweeps, "acceptance": state.acceptance_rate,
                 "U": U, "tail_bound": cert.tail_bound, "energy_drift": state.energy_drift()}
        deltas = np.asarray(series.delta)
        entry["max_abs_delta"] = float(np.abs(deltas).max()) if deltas.size else 0.0
        if entry["max_abs_delta"] > U * (1 + 1e-12):
            violations += 1
        try:
            m, se = batch_means(mags)
            entry["magnetization"] = m.tolist()
            entry["magnetization_se"] = se.tolist()
            t = _float(cfg, "t_frac") * U
            r35 = defect_tail_check(deltas, spec.beta, t)
            entry["defect_tail"] = {"t": t, **r35.__dict__}
            I = benchmark_scale(spec.d, spec.s, prof.L, prof.a) if prof.a >= 2 else float("nan")
            r34 = lemma34_diagnostic(deltas, _float(cfg, "zeta"), I, _float(cfg, "lambda_over_c"))
            entry["defect_markov"] = {"I": I, **r34.__dict__}
            violations += (not r35.passed) + (not r34.passed)
        except ValueError as exc:
            entry["diagnostics_skipped"] = str(exc)
        summary["chains"].append(entry)
    summary["violations"] = violations
    (out / "mc_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    rows = [[c["chain"], c["sweeps"], c["acceptance"], c["U"], c["max_abs_delta"],
             *(c.get("magnetization") or [float("nan")] * spec.n)] for c in summary["chains"]]
    write_csv(out / FILE_NAMES["mc-study"], "mc-study", cfg,
              ["chain", "sweeps", "acceptance", "U", "max_abs_delta"]
              + [f"m{c}" for c in range(spec.n)], rows, [f"violations={violations}"])
    return EXIT_VIOLATION if violations else EXIT_OK


def run_wedge_check(cfg: dict, out: Path, threads: int = 1) -> int:
    R = _int(cfg, "R")
    rows = []
    bad = 0
    for d in _ints(cfg["d_list"], "d_list"):
        box = Box(d, R)
        ys = box.sites[box.linf > 0]
        n_dist = n_wedge = n_norm = 0
        max_pre = 0
        for x in ys:
            img = wedge_map_many(x, ys)
            dy = np.sum((ys - x) ** 2, axis=1)
            di = np.sum((img - x) ** 2, axis=1)
            n_dist += int(np.sum(di > dy))
            n_wedge += int(np.sum(~in_wedge(x, img)))
            # sup-norm preserved, so every profile angle is preserved
            n_norm += int(np.sum(np.abs(img).max(axis=1) != np.abs(ys).max(axis=1)))
            keys = (img + R) @ (2 * R + 1) ** np.arange(d)
            max_pre = max(max_pre, int(np.bincount(keys).max()))
        over = int(max_pre > preimage_multiplicity_bound(d))
        bad += n_dist + n_wedge + n_norm + over
        rows.append([d, R, len(ys) ** 2, n_dist, n_wedge, n_norm, max_pre,
                     preimage_multiplicity_bound(d)])
    write_csv(out / FILE_NAMES["wedge-check"], "wedge-check", cfg,
              ["d", "R", "pairs", "distance_violations", "wedge_violations",
               "norm_violations", "max_preimages", "preimage_bound"], rows, [f"violations={bad}"])
    return EXIT_VIOLATION if bad else EXIT_OK


def run_smoothing_scan(cfg: dict, out: Path, threads: int = 1) -> int:
    spec = model_spec(cfg)
    L, a, ell = _int(cfg, "L"), _int(cfg, "a"), _int(cfg, "ell")
    seps = _ints(cfg["separations"], "separations")
    prof = _profile(L, a, spec.d)
    # first block deep inside (constant angle), second moved outward by the separation
    c1 = L - a - ell
    if c1 < ell:
        raise ConfigError("interior too small for the block: need L - a >= 2 ell")
    need = c1 + max(seps) + ell
    box = Box(spec.d, need)
    rng = make_rng(spec.seed, 0)
    rows = []
    for k in range(_int(cfg, "samples")):
        if cfg["start"] == "uniform":
            config = SpinConfig.uniform(box, spec.n, rng)
        elif cfg["start"] == "aligned":
            config = SpinConfig.aligned(box, spec.n)
        else:
            raise ConfigError("start must be 'aligned' or 'uniform'")
        for sep in seps:
            x1 = np.zeros(spec.d, dtype=int)
            x1[0] = c1
            x2 = x1.copy()
            x2[0] += sep
            try:
                lhs, rhs = smoothing_check(config, x1, x2, ell, prof, spec.kernel)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            rows.append([k, sep, lhs, rhs, lhs / rhs if rhs > 0 else 0.0])
    means = {}
    for row in rows:
        means.setdefault(row[1], []).append(row[4])
    footer = [f"mean_ratio sep={sep} value={float(np.mean(v))!r}" for sep, v in sorted(means.items())]
    write_csv(out / FILE_NAMES["smoothing-scan"], "smoothing-scan", cfg,
              ["sample", "separation", "lhs", "rhs_scale", "ratio"], rows, footer)
    return EXIT_OK


COMMANDS = {
    "bound-suite": run_bound_suite,
    "scaling-grid": run_scaling_grid,
    "mc-study": run_mc_study,
    "wedge-check": run_wedge_check,
    "smoothing-scan": run_smoothing_scan,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"spinlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key = value experiment file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        if name == "scaling-grid":
            p.add_argument("--d", type=int, default=None)
            p.add_argument("--s", type=float, default=None)
            p.add_argument("--L-list", dest="L_list", default=None)
            p.add_argument("--a-rule", dest="a_rule", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    overrides = {"seed": args.seed}
    for key in ("d", "s", "L_list", "a_rule"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    try:
        text = Path(args.config).read_text()
        cfg = load_config(args.command, text, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args.threads)
    except (ConfigError, BoxTooSmallError, OSError) as exc:
        print(f"spinlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
