"""Command line front end.

    spindiff simulate --config run.json [--out DIR] [--workers N] [--svg]
    spindiff validate --config run.json [--out DIR]
    spindiff fit FILE.csv ... | --manifest sweep.csv [--float-n] [--out DIR]
    spindiff sweep --config run.json --axis orientation --values 100 110 111

The output directory defaults to ``$SPINDIFF_OUTPUT_DIR`` or ``./spindiff-out``.
Exit codes: 0 ok, 2 configuration, 3 I/O, 4 convergence, 5 capacity,
6 validation tolerance exceeded.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
from pathlib import Path
import shutil
import sys
import tempfile
import time
from typing import Optional

import numpy as np

from . import io as sio
from .config import RunConfig, load_config, parse_config
from .errors import IO_EXIT_CODE, ConfigError, ConvergenceError, SpindiffError
from .fitting import DecayModel, digest_arrays, fit_decay, fit_saturation
from .pairecho import (
    DecayCurve,
    _supercell_and_A,
    ensemble_curves,
    ensemble_decay,
    format_curve_csv,
    id_factor,
    tree_mean,
)
from .svg import plot_curves
from .validation import (
    commuting_cluster,
    compare,
    strong_lattice_clusters,
    weak_lattice_clusters,
)

log = logging.getLogger("spindiff")

VALIDATION_EXIT_CODE = 6
OUTPUT_ENV = "SPINDIFF_OUTPUT_DIR"


# -- output staging ------------------------------------------------------------


class _Staged:
    """Write into a temporary sibling directory; move files into place on success."""

    def __init__(self, outdir):
        self.outdir = Path(outdir)

    def __enter__(self) -> Path:
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.outdir))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                for f in sorted(self.tmp.iterdir()):
                    os.replace(f, self.outdir / f.name)
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def _manifest(cfg: RunConfig, command: str, files: dict, started: float, extra: Optional[dict] = None) -> dict:
    return {
        "command": command,
        "config": cfg.dump(),
        "tool_version": sio.tool_version(),
        "wall_clock_s": round(time.time() - started, 3),
        "outputs": {name: sio.file_digest(path) for name, path in sorted(files.items())},
        **(extra or {}),
    }


# -- simulate ------------------------------------------------------------------


def simulate_curve(cfg: RunConfig, workers: Optional[int] = None) -> DecayCurve:
    return ensemble_decay(cfg.ensemble_spec(), cfg.lattice_spec(), cfg.hyperfine_params(),
                          cfg.pair_cutoff, workers or cfg.workers)


def fit_simulated(curve: DecayCurve, template: DecayModel) -> dict:
    """Fixed-template fit of a simulated curve; a flat curve reports T_SD = inf."""
    base = np.ones_like(curve.S) if math.isinf(template.T_ID) else id_factor(curve.tau, template.T_ID)
    if np.all(curve.S >= base * (1 - 1e-12)):
        return {"T_SD": math.inf, "n": template.n, "ci95": None, "converged": True, "no_decay": True}
    f = fit_decay(curve, template)
    ci = f.ci95.get("T_SD")
    return {"T_SD": f.T_SD, "n": f.n, "ci95": list(ci) if ci else None, "converged": f.converged,
            "no_decay": False, "fit": f}


def cmd_simulate(cfg: RunConfig, outdir, workers: Optional[int] = None, svg: Optional[bool] = None) -> DecayCurve:
    started = time.time()
    curve = simulate_curve(cfg, workers)
    with _Staged(outdir) as tmp:
        files = {"decay.csv": tmp / "decay.csv"}
        (tmp / "decay.csv").write_text(format_curve_csv(curve))
        sio.write_json(curve.meta, tmp / "decay.meta.json")
        files["decay.meta.json"] = tmp / "decay.meta.json"
        if cfg.svg if svg is None else svg:
            plot_curves([("ensemble", curve.tau * 1e6, curve.S)], tmp / "decay.svg")
            files["decay.svg"] = tmp / "decay.svg"
        fit = fit_simulated(curve, cfg.decay_template())
        sio.write_json({k: v for k, v in fit.items() if k != "fit"}, tmp / "fit.json")
        files["fit.json"] = tmp / "fit.json"
        sio.write_json(_manifest(cfg, "simulate", files, started), tmp / "manifest.json")
    return curve


# -- validate ------------------------------------------------------------------


def cmd_validate(cfg: RunConfig, outdir) -> tuple[dict, int]:
    """Compare exact and pair-approximation echoes; returns (report, exit code)."""
    from .errors import CapacityError

    started = time.time()
    v = cfg.validate_
    if v.max_spins > v.capacity:
        raise CapacityError(f"validate.max_spins={v.max_spins} exceeds validate.capacity={v.capacity}; "
                            "lower max_spins (exact cost grows as 4^N)")
    taus = np.linspace(0.0, v.tau_max_us * 1e-6, v.tau_steps)
    rng = np.random.default_rng(cfg.seed)
    sites, A_all = _supercell_and_A(cfg.lattice_spec(), cfg.hyperfine_params())
    abundance = cfg.lattice.abundance
    rows = []
    for k, p in enumerate(weak_lattice_clusters(rng, v.n_clusters, sites, A_all, abundance,
                                                v.min_spins, v.max_spins, v.max_pair_exponent)):
        rows.append(("lattice-weak", compare(p, taus, k, v.max_pair_exponent)))
    for kind in ("no-dipolar", "equal-A"):
        for k in range(10):
            p = commuting_cluster(rng, int(rng.integers(max(v.min_spins, 2), v.max_spins + 1)),
                                  2 * np.pi * v.A_max_kHz * 1e3, kind)
            rows.append((kind, compare(p, taus, k, v.max_pair_exponent)))
    if v.strong_clusters:
        for k, p in enumerate(strong_lattice_clusters(rng, v.strong_clusters, sites, A_all, abundance,
                                                      v.min_spins, v.max_spins, v.max_pair_exponent)):
            rows.append(("lattice-strong", compare(p, taus, k, v.max_pair_exponent)))

    weak = [c.max_deviation for kind, c in rows if c.regime == "weak"]
    commuting = [c.max_deviation for kind, c in rows if kind in ("no-dipolar", "equal-A")]
    strong = [c.max_deviation for kind, c in rows if c.regime == "strong"]
    weak_max = max(weak) if weak else 0.0
    report = {
        "n_weak": len(weak),
        "weak_max_deviation": weak_max,
        "commuting_max_deviation": max(commuting) if commuting else 0.0,
        "strong_max_deviation": max(strong) if strong else None,
        "tolerance": v.tolerance,
        "passed": bool(weak_max <= v.tolerance),
        "warnings": [],
    }
    if strong:
        report["warnings"].append(
            f"{len(strong)} strong-coupling cluster(s) outside the pair-approximation regime; "
            f"max deviation {max(strong):.3e} (expected-regime-violation)")
        log.warning(report["warnings"][-1])
    with _Staged(outdir) as tmp:
        with open(tmp / "validate.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "index", "n_spins", "max_pair_exponent", "max_deviation", "regime"])
            for kind, c in rows:
                w.writerow([kind, c.index, c.n_spins, f"{c.max_pair_exponent:.6e}",
                            f"{c.max_deviation:.6e}", c.regime])
        sio.write_json(report, tmp / "validate.json")
        files = {"validate.csv": tmp / "validate.csv", "validate.json": tmp / "validate.json"}
        sio.write_json(_manifest(cfg, "validate", files, started), tmp / "manifest.json")
    return report, 0 if report["passed"] else VALIDATION_EXIT_CODE


# -- fit -----------------------------------------------------------------------


def fit_template_from_args(n: float = 2.3, float_n: bool = False, float_S0: bool = True,
                           include_id: bool = False, T_ID_us: float = 1200.0) -> DecayModel:
    free = (("S0",) if float_S0 else ()) + ("T_SD",) + (("n",) if float_n else ())
    return DecayModel(S0=1.0, T_ID=T_ID_us * 1e-6 if include_id else math.inf, n=n, free=free)


def cmd_fit(paths, outdir, template: DecayModel = fit_template_from_args(), manifest=None,
            ci_method: str = "linearized") -> tuple[list, int]:
    """Fit each curve; one JSON report per file plus ``fit_summary.csv``.

    Malformed files are reported and skipped. With a manifest carrying
    ``power_mW``, a saturation fit is written to ``saturation.json``.
    """
    entries = [{"path": str(p)} for p in paths]
    if manifest is not None:
        entries += sio.read_manifest(manifest)
    results, failures = [], 0
    with _Staged(outdir) as tmp:
        for e in entries:
            name = Path(e["path"]).stem
            try:
                curve = sio.read_decay_csv(e["path"])
                f = fit_decay(curve, template, ci_method=ci_method)
            except (SpindiffError, OSError) as exc:
                failures += 1
                log.error("%s: %s", e["path"], exc)
                results.append({"path": e["path"], "error": str(exc)})
                continue
            meta = {**{k: curve.meta[k] for k in ("wavelength_nm", "power_mW") if k in curve.meta},
                    **{k: e[k] for k in ("wavelength_nm", "power_mW") if k in e}}
            rep = f.report(source=e["path"], digest=digest_arrays(curve.tau, curve.S))
            rep["signal"] = curve.meta.get("signal")
            rep.update(meta)
            sio.write_json(rep, tmp / f"{name}.fit.json")
            results.append({"path": e["path"], "fit": f, **meta})
        with open(tmp / "fit_summary.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "wavelength_nm", "power_mW", "T_SD_us", "T_SD_ci_lo_us", "T_SD_ci_hi_us",
                        "n", "converged", "error"])
            for r in results:
                if "fit" not in r:
                    w.writerow([r["path"], "", "", "", "", "", "", "", r["error"]])
                    continue
                f = r["fit"]
                lo, hi = f.ci95.get("T_SD", (math.nan, math.nan))
                w.writerow([r["path"], r.get("wavelength_nm", ""), r.get("power_mW", ""),
                            f"{f.T_SD * 1e6:.6g}", f"{lo * 1e6:.6g}", f"{hi * 1e6:.6g}",
                            f"{f.n:.6g}", f.converged, ""])
        powered = [(r["power_mW"], r["fit"].T_SD) for r in results if "fit" in r and "power_mW" in r]
        if len(powered) >= 4:
            sat = fit_saturation(powered)
            sio.write_json(sat.report(), tmp / "saturation.json")
            results.append({"saturation": sat})
    code = IO_EXIT_CODE if failures and failures == len(entries) else 0
    return results, code


# -- sweep ---------------------------------------------------------------------


def cmd_sweep(cfg: RunConfig, outdir, axis: Optional[str] = None, values=None,
              workers: Optional[int] = None) -> list[dict]:
    started = time.time()
    axis = axis or cfg.sweep.axis
    values = list(values if values is not None else cfg.sweep.values)
    template = cfg.decay_template()
    rows = []
    for v in values:
        data = cfg.dump()
        if axis == "orientation":
            data["ensemble"]["orientation"] = v
        elif axis == "abundance":
            data["lattice"]["abundance"] = float(v)
        elif axis == "pair_cutoff":
            data["pair_cutoff"] = float(v)
        else:
            raise ConfigError(f"unknown sweep axis {axis!r}")
        c = parse_config(data)
        per_config = ensemble_curves(c.ensemble_spec(), c.lattice_spec(), c.hyperfine_params(),
                                     c.pair_cutoff, workers or c.workers)
        curve = DecayCurve(c.ensemble_spec().tau, tree_mean(per_config))
        fit = fit_simulated(curve, template)
        ci = fit["ci95"] or [math.nan, math.nan]
        rows.append({
            "axis": axis, "value": v if isinstance(v, str) else str(v),
            "n_configs": len(per_config),
            "T_SD_us": fit["T_SD"] * 1e6, "T_SD_ci_lo_us": ci[0] * 1e6, "T_SD_ci_hi_us": ci[1] * 1e6,
            "n": fit["n"], "no_decay": fit["no_decay"],
            "S_last_mean": float(curve.S[-1]),
            "S_last_sem": float(np.std(per_config[:, -1], ddof=1) / math.sqrt(len(per_config)))
            if len(per_config) > 1 else math.nan,
        })
    with _Staged(outdir) as tmp:
        with open(tmp / "sweep.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            w.writeheader()
            for r in rows:
                w.writerow({k: (f"{x:.6g}" if isinstance(x, float) else x) for k, x in r.items()})
        files = {"sweep.csv": tmp / "sweep.csv"}
        sio.write_json(_manifest(cfg, "sweep", files, started, {"axis": axis, "values": values}),
                       tmp / "manifest.json")
    return rows


# -- argument parsing ----------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spindiff", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)

    p = sub.add_parser("simulate", help="ensemble pair-correlation echo decay")
    common(p)
    p.add_argument("--n-configs", type=int)
    p.add_argument("--orientation", help="100, 110, 111, sphere or x,y,z")
    p.add_argument("--abundance", type=float)
    p.add_argument("--bath-radius", type=float)
    p.add_argument("--svg", action="store_true", default=None)

    p = sub.add_parser("validate", help="pair approximation vs exact cluster echo")
    common(p)
    p.add_argument("--n-clusters", type=int)

    p = sub.add_parser("fit", help="fit decay CSV files")
    p.add_argument("files", nargs="*")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--n", type=float, default=2.3)
    p.add_argument("--float-n", action="store_true")
    p.add_argument("--fix-S0", action="store_true", help="hold S0 at 1 (normalized data)")
    p.add_argument("--include-id", action="store_true")
    p.add_argument("--T-ID-us", type=float, default=1200.0)
    p.add_argument("--bootstrap", action="store_true", help="bootstrap (1000 resamples) CIs")

    p = sub.add_parser("sweep", help="fitted T_SD along one parameter axis")
    common(p)
    p.add_argument("--axis", choices=["orientation", "abundance", "pair_cutoff"])
    p.add_argument("--values", nargs="+")
    p.add_argument("--n-configs", type=int)
    return ap


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        out["workers"] = args.workers
    ens = {}
    if getattr(args, "n_configs", None) is not None:
        ens["n_configs"] = args.n_configs
    if getattr(args, "orientation", None) is not None:
        o = args.orientation
        ens["orientation"] = [float(x) for x in o.split(",")] if "," in o else o
    if ens:
        out["ensemble"] = ens
    lat = {}
    if getattr(args, "abundance", None) is not None:
        lat["abundance"] = args.abundance
    if getattr(args, "bath_radius", None) is not None:
        lat["bath_radius"] = args.bath_radius
    if lat:
        out["lattice"] = lat
    if getattr(args, "n_clusters", None) is not None:
        out["validate"] = {"n_clusters": args.n_clusters}
    return out


def _merge(base: dict, over: dict) -> dict:
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v
    return base


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    over = _overrides(args)
    return parse_config(_merge(cfg.dump(), over)) if over else cfg


def _outdir(args, cfg: Optional[RunConfig] = None) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get(OUTPUT_ENV, "spindiff-out"))


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            cfg = _resolve_config(args)
            curve = cmd_simulate(cfg, _outdir(args, cfg), svg=args.svg)
            print(f"wrote {len(curve.S)} points to {_outdir(args, cfg)}")
            return 0
        if args.command == "validate":
            cfg = _resolve_config(args)
            report, code = cmd_validate(cfg, _outdir(args, cfg))
            print(f"weak clusters: {report['n_weak']}, max |S_exact - S_pair| = "
                  f"{report['weak_max_deviation']:.3e} (tolerance {report['tolerance']:.1e})")
            for w in report["warnings"]:
                print("warning:", w, file=sys.stderr)
            return code
        if args.command == "fit":
            if not args.files and not args.manifest:
                print("fit: give CSV files or --manifest", file=sys.stderr)
                return 2
            template = fit_template_from_args(args.n, args.float_n, not args.fix_S0,
                                              args.include_id, args.T_ID_us)
            results, code = cmd_fit(args.files, _outdir(args), template, args.manifest,
                                    "bootstrap" if args.bootstrap else "linearized")
            for r in results:
                if "fit" in r:
                    print(f"{r['path']}: T_SD = {r['fit'].T_SD * 1e6:.1f} us, n = {r['fit'].n:.3g}")
                elif "saturation" in r:
                    print(f"saturation plateau T = {r['saturation'].T * 1e6:.1f} us")
                else:
                    print(f"{r['path']}: error: {r['error']}", file=sys.stderr)
            return code
        if args.command == "sweep":
            cfg = _resolve_config(args)
            values = args.values
            if values is not None and (args.axis or cfg.sweep.axis) != "orientation":
                values = [float(x) for x in values]
            rows = cmd_sweep(cfg, _outdir(args, cfg), args.axis, values)
            for r in rows:
                print(f"{r['axis']}={r['value']}: T_SD = {r['T_SD_us']:.1f} us")
            return 0
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return exc.exit_code
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return exc.exit_code
    except SpindiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return IO_EXIT_CODE
    return 1


if __name__ == "__main__":
    sys.exit(main())
