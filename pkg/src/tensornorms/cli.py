"""Command-line front end: STT caching, norm and index sweeps, measurement tables, validation.

Every command writes ``<out>/<stem>.csv`` and, unless ``--no-plot``,
``<out>/<stem>.svg``. Exit codes: 0 ok, 1 usage, 2 numerical failure,
3 validation FAIL.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import io, oracle, scenarios
from .dynamics import DynamicsModel, propagate_sweep
from .eigen import PowerIterConfig
from .exceptions import PropagationError, TensorNormsError
from .guidance import KINDS as GUIDANCE_KINDS
from .guidance import COND_LIMIT, error_tensor, phirv_condition
from .indices import QUOTIENT_KINDS, IndexResult, beth_bound, demon, nu_quotient, nu_sampled, temon
from .measurement import ANGLES, UNIT_VECTOR, hbar_norm, hbar_tensor, unit_error_closed_form, unit_sphere_point
from .norms import compute_norm

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_FAIL = 0, 1, 2, 3

INDEX_KINDS = QUOTIENT_KINDS + ("demon_2", "demon_3", "temon_3", "temon_4", "beth_bound", "nu_sampled")
NORM_CHOICES = ("2", "inf2", "frob2", "2_upper", "frobinf_upper")
OBJECTIVE_ALIASES = {
    "propagation": "propagation_vv", "miss": "miss_E1", "miss2": "miss_E2",
    "velocity": "velocity_err_1", "velocity2": "velocity_err_2", "rendezvous": "rendezvous_F1",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- configuration -------------------------------------------------------------

def _floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.replace(",", " ").split()])


def load_scenario(name: str, config_path=None) -> scenarios.Scenario:
    """Built-in scenario ``name`` with overrides from an INI file.

    Sections and keys (all optional):

    ``[scenario]`` name, model (two_body | two_body_nondim | cr3bp | free), mu,
    x0 (6 numbers), elements (a e i raan argp M, degrees; two-body only),
    period, t0, tf_fraction, sweep_points, stt_order, rtol, atol,
    length_unit_km, speed_unit_ms.
    ``[scale]`` min, max, n, spacing (lin | log).
    ``[oracle]`` n_samples, seed, enable_opt.
    """
    cp = configparser.ConfigParser()
    if config_path is not None:
        if not Path(config_path).is_file():
            raise UsageError(f"config file not found: {config_path}")
        cp.read(config_path)
    sec = cp["scenario"] if cp.has_section("scenario") else {}
    name = sec.get("name", name)
    try:
        scn = scenarios.get(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if "model" in sec or "mu" in sec:
        kind = sec.get("model", scn.model.kind)
        try:
            if "mu" in sec:
                scn.model = DynamicsModel(kind, float(sec["mu"]))
            elif kind != scn.model.kind:
                scn.model = getattr(DynamicsModel, kind)()
        except (AttributeError, ValueError) as exc:
            raise UsageError(f"bad model settings: {exc}") from None
    if "elements" in sec:
        el = _floats(sec["elements"])
        if el.size != 6 or scn.model.kind != "two_body":
            raise UsageError("elements need six values and a two_body model")
        scn.x0 = scenarios.elements_to_state(*el, mu=scn.model.mu)
        scn.period = scenarios.two_body_period(el[0], scn.model.mu)
    if "x0" in sec:
        scn.x0 = _floats(sec["x0"])
        if scn.x0.size != 6:
            raise UsageError("x0 needs six values")
    casts = {"period": float, "t0": float, "tf_fraction": float, "sweep_points": int, "stt_order": int,
             "rtol": float, "atol": float, "length_unit_km": float, "speed_unit_ms": float}
    for key, cast in casts.items():
        if key in sec:
            setattr(scn, key, cast(sec[key]))
    if cp.has_section("scale"):
        s = cp["scale"]
        scn.scale_min = float(s.get("min", scn.scale_min))
        scn.scale_max = float(s.get("max", scn.scale_max))
        scn.scale_n = int(s.get("n", scn.scale_n))
        scn.scale_spacing = s.get("spacing", scn.scale_spacing)
        scn.extra["scale_max_set"] = "max" in s
    if cp.has_section("oracle"):
        o = cp["oracle"]
        scn.n_samples = int(o.get("n_samples", scn.n_samples))
        scn.seed = int(o.get("seed", scn.seed))
        scn.enable_opt = o.getboolean("enable_opt", scn.enable_opt)
    if scn.sweep_points < 2:
        raise UsageError("sweep_points must be at least 2")
    if scn.scale_min < 0:
        raise UsageError("scale min must be nonnegative")
    if scn.scale_spacing not in ("lin", "log"):
        raise UsageError("scale spacing must be lin or log")
    return scn


# -- shared helpers --------------------------------------------------------------

@contextmanager
def _pool(jobs: int):
    if jobs <= 1:
        yield None
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            yield ex


def _map(pool, fn, items):
    """Ordered map, in-process or through the pool."""
    return list(map(fn, items)) if pool is None else list(pool.map(fn, items))


def _sweep_key(scn: scenarios.Scenario, times, order: int) -> str:
    text = scn.stt_key(tf=float(times[-1]), order=order) + "|" + " ".join(repr(float(t)) for t in times)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def cached_stacks(scn: scenarios.Scenario, times, order: int, out: Path, log=print):
    """STT stacks at ``times`` from the cache, propagating and storing them on a miss."""
    path = out / "cache" / f"{_sweep_key(scn, times, order)}.stt"
    if path.is_file():
        log(f"cache hit {path}")
        return io.load_stacks(path), path
    stacks = propagate_sweep(scn.model, scn.x0, scn.t0, times, order, rtol=scn.rtol, atol=scn.atol)
    io.save_stacks(path, stacks)
    return stacks, path


def _stem(out: Path, *parts) -> Path:
    return out / "_".join(str(p) for p in parts if p)


def _emit(args, stem: Path, columns, rows, scn, plot=None):
    io.write_csv(stem.with_suffix(".csv"), columns, rows, scn.digest(), args.seed)
    print(f"wrote {stem.with_suffix('.csv')}")
    if plot is not None and not args.no_plot:
        from .plotting import line_plot
        line_plot(stem.with_suffix(".svg"), **plot)
        print(f"wrote {stem.with_suffix('.svg')}")


def _required_order(kinds) -> int:
    need = 2
    for k in kinds:
        if k in ("miss_E2", "velocity_err_2", "demon_3", "temon_3", "temon_4"):
            need = 3
    return need


# -- commands ------------------------------------------------------------------------

def cmd_stt(args, scn):
    order = args.order or scn.stt_order
    if args.sweep:
        times = scn.sweep_times()
    else:
        tf = scn.t0 + (args.tf_fraction if args.tf_fraction is not None else scn.tf_fraction) * scn.period
        times = np.array([tf])
    stacks, path = cached_stacks(scn, times, order, args.out)
    rows = []
    for s in stacks:
        det_err = abs(np.linalg.det(s.phi) - 1.0)
        rows.append([s.tf, det_err, np.linalg.norm(s.phi), np.linalg.norm(s.psi2.entries) if s.psi2 is not None else 0.0])
    worst = max(r[1] for r in rows)
    print(f"{scn.name}: {len(stacks)} stack(s) order {order}, cache {path}")
    print(f"max |det Phi - 1| = {worst:.3e}")
    if len(stacks) == 1 and stacks[0].tf == stacks[0].t0:
        print("Phi = I (zero-length interval)")
    _emit(args, _stem(args.out, "stt", scn.name), ["t_f", "det_phi_error", "frob_phi", "frob_psi2"], rows, scn,
          plot=dict(x=[r[0] for r in rows], series={"|det Phi - 1|": [max(r[1], 1e-18) for r in rows]},
                    xlabel="t_f", ylabel="|det Phi - 1|", logy=True, title=f"{scn.name} STM determinant"))
    return EXIT_OK


def _norm_row(job):
    stack, kind, norm_kind, cfg = job
    cond = phirv_condition(stack)
    try:
        t = error_tensor(stack, kind)
    except TensorNormsError:
        return [stack.tf, float("nan"), False, 0, cond]
    res = compute_norm(t.tensor, norm_kind, cfg)
    return [stack.tf, res.value, res.converged, res.restarts_used, cond]


def cmd_norm(args, scn):
    kind = OBJECTIVE_ALIASES.get(args.kind, args.kind)
    cfg = PowerIterConfig(seed=args.seed)
    stacks, _ = cached_stacks(scn, scn.sweep_times(), max(scn.stt_order, _required_order([kind])), args.out)
    with _pool(args.jobs) as pool:
        rows = _map(pool, _norm_row, [(s, kind, args.norm, cfg) for s in stacks])
    flagged = sum(1 for r in rows if not np.isfinite(r[1]))
    if flagged:
        print(f"{flagged} time point(s) flagged: Phi^r_v condition above {COND_LIMIT:.0e}")
    frac = [(r[0] - scn.t0) / scn.period for r in rows]
    _emit(args, _stem(args.out, "norm", scn.name, kind, args.norm),
          ["t_f", "norm_value", "converged", "restarts_used", "cond_phirv"], rows, scn,
          plot=dict(x=frac, series={f"|{kind}|_{args.norm}": [r[1] for r in rows]},
                    xlabel="t_f / period", ylabel="tensor norm", logy=True, title=f"{scn.name} {kind}"))
    return EXIT_OK


def _scale_units(scn, kind):
    """(model units per display unit of R, display units per model unit of the error, labels)."""
    if kind == "propagation_vv":
        return 1.0 / scn.speed_unit_ms, scn.length_unit_km, "m/s", "km"
    if kind.startswith("velocity"):
        return 1.0 / scn.length_unit_km, scn.speed_unit_ms, "km", "m/s"
    return 1.0 / scn.length_unit_km, scn.length_unit_km, "km", "km"


def _display_scales(args, scn, kind):
    if args.r_max is not None:
        r_max = args.r_max
    elif scn.extra.get("scale_max_set"):
        r_max = scn.scale_max
    elif kind == "propagation_vv":
        r_max = 200.0
    else:
        r_max = 2000.0 if scn.model.kind == "cr3bp" else 200.0
    n = args.n_scales or scn.scale_n
    r_min = args.r_min if args.r_min is not None else scn.scale_min
    spacing = args.spacing or scn.scale_spacing
    if spacing == "log":
        lo = r_min if r_min > 0 else r_max * 1e-3
        return np.geomspace(lo, r_max, n)
    return np.linspace(r_min, r_max, n)


def _single_stack(args, scn, order):
    tf = scn.t0 + (args.tf_fraction if args.tf_fraction is not None else scn.tf_fraction) * scn.period
    stacks, _ = cached_stacks(scn, np.array([tf]), order, args.out)
    return stacks[0]


def cmd_guidance(args, scn):
    kind = OBJECTIVE_ALIASES.get(args.kind, args.kind)
    stack = _single_stack(args, scn, max(scn.stt_order, _required_order([kind])))
    t = error_tensor(stack, kind)
    res = compute_norm(t.tensor, "2", PowerIterConfig(seed=args.seed))
    to_model, to_display, r_unit, e_unit = _scale_units(scn, kind)
    rows = []
    for r in _display_scales(args, scn, kind):
        bound = t.coefficient * res.value * (r * to_model) ** t.order
        rows.append([r, bound * to_display, res.value, res.converged, t.phirv_condition])
    _emit(args, _stem(args.out, "guidance", scn.name, kind),
          ["R", "bound", "norm_value", "converged", "cond_phirv"], rows, scn,
          plot=dict(x=[r[0] for r in rows], series={"bound": [r[1] for r in rows]},
                    xlabel=f"R [{r_unit}]", ylabel=f"error bound [{e_unit}]", title=f"{scn.name} {kind}"))
    return EXIT_OK


def _index_rows(job):
    stack, kinds, radius, samples, seed, cfg = job
    rows = []
    for kind in kinds:
        if kind in QUOTIENT_KINDS:
            res = nu_quotient(stack, kind, cfg)
        elif kind.startswith("demon_"):
            res = demon(stack, int(kind[-1]), cfg)
        elif kind.startswith("temon_"):
            res = temon(stack, int(kind[-1]), radius, cfg)
        elif kind == "beth_bound":
            res = beth_bound(stack, stack.order if stack.order <= 3 else 3, radius, cfg)
        else:
            if stack.tf == stack.t0:
                res = IndexResult(0.0, None, "nu_sampled")
            else:
                res = nu_sampled(stack.model, stack.x0, stack.t0, stack.tf, radius, samples, seed,
                                 stack.rtol, stack.atol)
        d = res.direction if res.direction is not None else np.full(6, np.nan)
        d = list(d) + [float("nan")] * (6 - len(d))
        rows.append([stack.tf, kind, res.order_m if res.order_m is not None else 0, res.value, *d[:6],
                     res.converged])
    return rows


def cmd_nonlin(args, scn):
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    bad = [k for k in kinds if k not in INDEX_KINDS]
    if bad:
        raise UsageError(f"unknown index kind(s) {', '.join(bad)}; choose from {', '.join(INDEX_KINDS)}")
    order = max(scn.stt_order, _required_order(kinds))
    times = np.concatenate([[scn.t0], scn.sweep_times()])
    stacks, _ = cached_stacks(scn, times, order, args.out)
    cfg = PowerIterConfig(seed=args.seed)
    jobs = [(s, kinds, args.radius, args.samples, (args.seed, i), cfg) for i, s in enumerate(stacks)]
    with _pool(args.jobs) as pool:
        rows = [r for chunk in _map(pool, _index_rows, jobs) for r in chunk]
    frac = [(s.tf - scn.t0) / scn.period for s in stacks]
    series = {k: [r[3] for r in rows if r[1] == k] for k in kinds}
    _emit(args, _stem(args.out, "nonlin", scn.name),
          ["t_f", "kind", "order_m", "value"] + [f"dir_{i}" for i in range(6)] + ["converged"], rows, scn,
          plot=dict(x=frac, series=series, xlabel="t_f / period", ylabel="index", logy=True,
                    title=f"{scn.name} nonlinearity indices"))
    return EXIT_OK


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError("grid must be start:stop:step") from None
    if step <= 0 or hi < lo:
        raise UsageError("grid needs step > 0 and stop >= start")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def cmd_measurement(args, scn):
    cfg = PowerIterConfig(seed=args.seed)
    if args.action == "compare":
        phis = _parse_grid(args.grid or "0:85:5")
        rows = []
        for phi in phis:
            r = unit_sphere_point(args.theta, phi)
            rows.append([phi, hbar_norm(ANGLES, r, cfg), hbar_norm(UNIT_VECTOR, r, cfg)])
        _emit(args, _stem(args.out, "measurement", "compare"),
              ["phi_deg", "norm_hbar_angles", "norm_hbar_unitvec"], rows, scn,
              plot=dict(x=phis, series={"angles": [r[1] for r in rows], "unit vector": [r[2] for r in rows]},
                        xlabel="elevation [deg]", ylabel="|Hbar|_2", logy=True))
        return EXIT_OK
    # unit_error: squared error of the unit-vector model at r = e_x over deviation directions
    thetas = _parse_grid(args.grid or "5:355:10")
    phis = _parse_grid(args.phi_grid or "-80:90:10")
    hb = hbar_tensor(UNIT_VECTOR, np.array([1.0, 0.0, 0.0])).entries
    rows = []
    for th in thetas:
        for ph in phis:
            u = unit_sphere_point(th, ph)
            val = float(np.sum((hb @ u @ u) ** 2))
            rows.append([th, ph, val, unit_error_closed_form(np.radians(th), np.radians(ph))])
    _emit(args, _stem(args.out, "measurement", "unit_error"),
          ["theta_deg", "phi_deg", "error_sq", "closed_form"], rows, scn)
    return EXIT_OK


def cmd_validate(args, scn):
    kind = OBJECTIVE_ALIASES.get(args.objective, args.objective)
    stack = _single_stack(args, scn, max(scn.stt_order, _required_order([kind])))
    to_model, to_display, r_unit, e_unit = _scale_units(scn, kind)
    scales = _display_scales(args, scn, kind)
    n_samples = args.samples if args.samples is not None else scn.n_samples
    with _pool(args.jobs) as pool:
        reports = oracle.run_protocol(stack, kind, scales * to_model, n_samples=n_samples, seed=args.seed,
                                      enable_opt=not args.no_opt and scn.enable_opt,
                                      cfg=PowerIterConfig(seed=args.seed), executor=pool)
    rows = []
    n_fail = 0
    for r_disp, rep in zip(scales, reports):
        ok = (rep.rel_err_bound <= args.tol_bound and rep.rel_err_eigvec <= args.tol_eigvec
              and not (rep.sampled_max > rep.optimized_max * (1 + 1e-6)))
        n_fail += not ok
        rows.append([r_disp, rep.bound * to_display, rep.eigvec_eval * to_display, rep.sampled_max * to_display,
                     rep.optimized_max * to_display, rep.rel_err_bound, rep.rel_err_sampled, rep.rel_err_eigvec,
                     rep.n_failed_samples, "PASS" if ok else "FAIL"])
    _emit(args, _stem(args.out, "validate", scn.name, kind),
          ["R", "bound", "eigvec_eval", "sampled_max", "optimized_max", "rel_err_bound", "rel_err_sampled",
           "rel_err_eigvec", "n_failed_samples", "status"], rows, scn,
          plot=dict(x=scales, series={"bound": [r[1] for r in rows], "optimized": [r[4] for r in rows],
                                      "sampled": [r[3] for r in rows], "eigenvector": [r[2] for r in rows]},
                    xlabel=f"R [{r_unit}]", ylabel=f"max error [{e_unit}]", title=f"{scn.name} {kind}"))
    print(f"{len(rows) - n_fail} PASS, {n_fail} FAIL")
    return EXIT_FAIL if n_fail else EXIT_OK


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI file with [scenario], [scale], [oracle] sections")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default from config, else 0)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--scenario", default="iss", help="built-in scenario: iss, nrho or circular")
    common.add_argument("--no-plot", action="store_true", help="skip SVG figures")

    p = _Parser(prog="tensornorms", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("stt", parents=[common], help="propagate and cache STTs")
    s.add_argument("--order", type=int, choices=(1, 2, 3))
    s.add_argument("--tf-fraction", type=float, help="final time as a fraction of the period")
    s.add_argument("--sweep", action="store_true", help="cache the full-period sweep instead of one t_f")

    s = sub.add_parser("norm", parents=[common], help="error-tensor norm over one period")
    s.add_argument("--kind", default="propagation_vv", choices=GUIDANCE_KINDS + tuple(OBJECTIVE_ALIASES))
    s.add_argument("--norm", default="2", choices=NORM_CHOICES)

    s = sub.add_parser("guidance", parents=[common], help="bound curve over a scale grid")
    s.add_argument("--kind", default="miss_E1", choices=GUIDANCE_KINDS + tuple(OBJECTIVE_ALIASES))
    s.add_argument("--tf-fraction", type=float)
    _scale_args(s)

    s = sub.add_parser("nonlin", parents=[common], help="nonlinearity indices over one period")
    s.add_argument("--kinds", default="nu_2,nu_frob2,nu_2_upper",
                   help=f"comma list from: {', '.join(INDEX_KINDS)}")
    s.add_argument("--radius", type=float, default=1e-3, help="deviation radius in model units")
    s.add_argument("--samples", type=int, default=1000, help="samples for nu_sampled")

    s = sub.add_parser("measurement", parents=[common], help="measurement nonlinearity tables")
    s.add_argument("action", choices=("compare", "unit_error"))
    s.add_argument("--grid", help="start:stop:step in degrees (elevation for compare, azimuth for unit_error)")
    s.add_argument("--phi-grid", help="elevation grid for unit_error")
    s.add_argument("--theta", type=float, default=0.0, help="azimuth for compare [deg]")

    s = sub.add_parser("validate", parents=[common], help="bound vs sampled/eigenvector/optimized maxima")
    s.add_argument("--objective", default="propagation",
                   choices=tuple(OBJECTIVE_ALIASES) + GUIDANCE_KINDS)
    s.add_argument("--tf-fraction", type=float)
    s.add_argument("--samples", type=int, help="sphere samples per scale (default from config, 5000)")
    s.add_argument("--no-opt", action="store_true", help="skip the local optimization")
    s.add_argument("--tol-bound", type=float, default=0.10, help="max rel_err_bound for PASS")
    s.add_argument("--tol-eigvec", type=float, default=1e-4, help="max rel_err_eigvec for PASS")
    _scale_args(s)
    return p


def _scale_args(s):
    s.add_argument("--R-min", dest="r_min", type=float, help="smallest scale (m/s or km)")
    s.add_argument("--R-max", dest="r_max", type=float, help="largest scale (m/s or km)")
    s.add_argument("--n-scales", type=int, help="number of scale points")
    s.add_argument("--spacing", choices=("lin", "log"))


COMMANDS = {"stt": cmd_stt, "norm": cmd_norm, "guidance": cmd_guidance, "nonlin": cmd_nonlin,
            "measurement": cmd_measurement, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        scn = load_scenario(args.scenario, args.config)
        if args.seed is None:
            args.seed = scn.seed
        scn.seed = args.seed
        return COMMANDS[args.command](args, scn)
    except UsageError as exc:
        print(f"tensornorms: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PropagationError as exc:
        where = f" (t = {exc.time!r})" if exc.time is not None else ""
        print(f"tensornorms: propagation failed{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (TensorNormsError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"tensornorms: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
