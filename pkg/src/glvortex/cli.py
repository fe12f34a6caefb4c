"""Command-line driver.

Every subcommand takes ``--config`` (a JSON path or a preset name), writes
its artifacts plus a report JSON/CSV under ``--out`` and exits with 0 when
all checks pass, 2 when any check is flagged or failed, 1 on error.
"""
from __future__ import annotations

import functools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from .harness import (ConfigError, StageError, exit_code, list_presets, load_config, run_checks,
                      run_stage_checks)


def _common(fn):
    @click.option("--config", "config", default=None, help="Scenario JSON path or preset name.")
    @click.option("--out", "out", default="out", show_default=True, type=click.Path(file_okay=False),
                  help="Output directory.")
    @click.option("--threads", default=1, show_default=True, type=click.IntRange(1),
                  help="Worker processes (scenario-level).")
    @click.option("--seed", default=None, type=int, help="Override the config seed.")
    @functools.wraps(fn)
    def wrapper(*args, **kw):
        try:
            code = fn(*args, **kw)
        except (ConfigError, StageError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except Exception as exc:  # any other failure is an error exit, not a traceback
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(1)
        sys.exit(code)
    return wrapper


def _load(config, seed):
    if config is None:
        raise ConfigError("config", "--config is required for this command")
    cfg = load_config(config)
    return cfg if seed is None else cfg.with_seed(seed)


def _emit(reports, out, tag=None) -> int:
    for rep in reports:
        rep.write(out, tag)
        for c in rep.checks:
            eps = "-" if c.epsilon is None else f"{c.epsilon:g}"
            part = c.detail.get("part", "")
            click.echo(f"{rep.scenario:16s} {c.name:17s} {eps:>6s} {part:12s} {c.status}")
        click.echo(f"{rep.scenario}: {rep.status} digest={rep.digest()}")
    return exit_code(reports)


def _eps_tag(eps) -> str:
    return f"eps{eps:g}"


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Vortex-ball, covering and mass-displacement pipeline."""


@main.command()
@_common
def synth(config, out, threads, seed):
    """Synthesize (u, A) for every ε and write GLF1 files."""
    from .grid_field import write_glf1
    from .harness import Run

    cfg = _load(config, seed)
    Path(out).mkdir(parents=True, exist_ok=True)
    run = Run(cfg)
    for eps in cfg.epsilons:
        u, a, _ = run.fields(eps)
        write_glf1(Path(out) / f"{cfg.name}_{_eps_tag(eps)}_u.glf1", u)
        write_glf1(Path(out) / f"{cfg.name}_{_eps_tag(eps)}_a.glf1", a, eps)
    return _emit([run_stage_checks(cfg, "synth")], out, "synth")


@main.command()
@_common
def detect(config, out, threads, seed):
    """Sublevel components of |u| <= 1/2 with their degrees."""
    from .harness import Run
    from .vortex_detect import plaquette_winding, sublevel_components

    cfg = _load(config, seed)
    Path(out).mkdir(parents=True, exist_ok=True)
    run = Run(cfg)
    for eps in cfg.epsilons:
        u, _, _ = run.fields(eps)
        comps = sublevel_components(u)
        X, Y = u.geometry.coords
        rows = []
        for k, idx in enumerate(comps.components):
            rows.append({"component": k, "size": int(idx.size), "compact": bool(comps.compact[k]),
                         "degree": None if comps.degree[k] is None else int(comps.degree[k]),
                         "cx": float(X.ravel()[idx].mean()), "cy": float(Y.ravel()[idx].mean())})
        doc = {"epsilon": eps, "components": rows,
               "plaquette_total": int(plaquette_winding(u).sum())}
        (Path(out) / f"{cfg.name}_{_eps_tag(eps)}_components.json").write_text(
            json.dumps(doc, sort_keys=True, indent=1))
    return _emit([run_stage_checks(cfg, "detect")], out, "detect")


@main.command()
@_common
def balls(config, out, threads, seed):
    """Ball construction: family, verdict CSV and growth trace."""
    from .ball_construction import construct
    from .harness import Run

    cfg = _load(config, seed)
    Path(out).mkdir(parents=True, exist_ok=True)
    run = Run(cfg)
    p = cfg.params.get("ball-soundness", {})
    for eps in cfg.epsilons:
        u, a, e = run.fields(eps)
        fam, verdict, trace = construct(u, a, p.get("r", 0.3), p.get("C_bar", 2.0),
                                        constants=run.constants, e=e)
        stem = Path(out) / f"{cfg.name}_{_eps_tag(eps)}"
        Path(f"{stem}_balls.json").write_text(fam.to_json())
        lines = ["part,cx,cy,lhs,rhs,slack"] + [",".join(map(str, r)) for r in verdict.to_csv_rows()]
        Path(f"{stem}_verdict.csv").write_text("\n".join(lines) + "\n")
        Path(f"{stem}_trace.jsonl").write_text(trace.to_jsonl() + "\n" if trace else "")
    return _emit([run_stage_checks(cfg, "balls")], out, "balls")


@main.command()
@_common
def cover(config, out, threads, seed):
    """Covering, localized ball families and the vorticity measure ν."""
    from .harness import Run

    cfg = _load(config, seed)
    Path(out).mkdir(parents=True, exist_ok=True)
    run = Run(cfg)
    for eps in cfg.epsilons:
        loc = run.localization(eps)
        stem = Path(out) / f"{cfg.name}_{_eps_tag(eps)}"
        Path(f"{stem}_covering.json").write_text(loc.cov.to_json())
        Path(f"{stem}_nu.json").write_text(loc.nu.to_json())
        Path(f"{stem}_balls.json").write_text(loc.small.to_json())
        flags = {k: (v if not isinstance(v, (np.generic,)) else v.item()) for k, v in loc.flags.items()}
        Path(f"{stem}_flags.json").write_text(json.dumps(flags, sort_keys=True, indent=1, default=str))
    return _emit([run_stage_checks(cfg, "cover")], out, "cover")


@main.command()
@_common
def displace(config, out, threads, seed):
    """Mass displacement: per-cell measures of f and g."""
    from .harness import Run

    cfg = _load(config, seed)
    Path(out).mkdir(parents=True, exist_ok=True)
    run = Run(cfg)
    for eps in cfg.epsilons:
        gres = run.g_result(eps)
        stem = Path(out) / f"{cfg.name}_{_eps_tag(eps)}"
        lines = ["cell,interior,f_mass,g_mass,c,residual,g_plus,g_minus"]
        for alpha, cm in sorted(gres.cells.items()):
            lines.append(",".join(map(repr, (alpha, bool(cm.interior), float(np.sum(cm.f)),
                                             float(np.sum(cm.g)), float(cm.c), float(cm.residual),
                                             gres.g_plus[alpha], gres.g_minus[alpha]))))
        Path(f"{stem}_cells.csv").write_text("\n".join(lines) + "\n")
        np.save(f"{stem}_g.npy", gres.g)
    return _emit([run_stage_checks(cfg, "displace")], out, "displace")


@main.command()
@_common
def renorm(config, out, threads, seed):
    """Renormalized energy of the config's point set (``params.renorm``) and the W checks."""
    from .renormalized_energy import CutoffFamily, PointConfiguration, renorm_energy

    cfg = _load(config, seed)
    Path(out).mkdir(parents=True, exist_ok=True)
    p = cfg.params.get("renorm")
    if p:
        pc = PointConfiguration(np.array(p["points"], float), p.get("h", 0.0), p.get("degrees"))
        chi = CutoffFamily(p.get("shape", "ball"), p["R"], p.get("width", 1.0))
        res = renorm_energy(pc, chi, p.get("etas", (0.1, 0.01, 0.001)), p.get("spacing", 0.02))
        (Path(out) / f"{cfg.name}_renorm.csv").write_text(res.to_csv())
    return _emit([run_stage_checks(cfg, "renorm")], out, "renorm")


@main.command("check-all")
@_common
def check_all(config, out, threads, seed):
    """Run every check of a config, or of all presets when --config is omitted."""
    names = [config] if config else list_presets()
    cfgs = [load_config(n) for n in names]
    if seed is not None:
        cfgs = [c.with_seed(seed) for c in cfgs]
    if threads > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run_checks, cfgs))
    else:
        reports = [run_checks(c) for c in cfgs]
    code = _emit(reports, out)
    summary = {r.scenario: {"status": r.status, "digest": r.digest()} for r in reports}
    (Path(out) / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1))
    return code


if __name__ == "__main__":
    main()
