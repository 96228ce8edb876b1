"""Command line interface.

Every command writes ``config.json`` and ``results.json`` (plus
``samples.csv`` where there are per-path or per-row data) into the output
directory.  Exit codes: 0 success, 2 an Inconclusive verdict (or a failed
acceptance criterion), 1 usage or runtime error.
"""

from __future__ import annotations

import argparse
import itertools
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..analytic import IntegralTestSpec, feller_test_1d, fuchsian_test, khasminskii_verdict, nested_integral_converges, \
    radial_explosion_test
from ..coeffs import CoefficientError, ScalarField
from ..girsanov import dichotomy_verdict
from ..market import diagonal_market, expected_price_curve, martingale_measure_check, one_dim_mart_criterion, \
    scalar_market
from ..quadrature import Tri
from ..sde import iter_path_chunks
from ..timechange import perpetual_integral
from ..verdict import Outcome, Verdict
from ..zoo import RHO_PROFILES, UnknownModel, build_model, clock_field, g_field
from . import acceptance
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import counterexample_experiment, explosion_verdict, verify_timechange_law
from .io import dumps, load_results, write_run

EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


MARKETS = {
    "one": lambda: scalar_market(lambda x: np.ones_like(x), name="a=1"),
    "quadratic": lambda: scalar_market(lambda x: 1.0 + x * x, name="a=1+x^2"),
    "quartic": lambda: scalar_market(lambda x: 1.0 + x ** 4, name="a=1+x^4"),
    "ui4": lambda: diagonal_market(lambda r: 1.0 / (2.0 + r ** 4), 4, name="diag(1/(2+|x|^4),1,1,1)"),
}

MARKET_PROFILES = {
    "one": lambda x: np.ones_like(x),
    "quadratic": lambda x: 1.0 + x * x,
    "quartic": lambda x: 1.0 + x ** 4,
}


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML experiment config")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("-n", "--n-paths", type=int, dest="n_paths")
    common.add_argument("--t-max", type=float, dest="t_max")
    common.add_argument("--workers", type=int)

    p = _Parser(prog="tcdiff", description="Explosion, time change and absolute continuity of diffusions.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="simulate a zoo model")
    s.add_argument("--model", help="model id, e.g. radial:p=3")
    s.add_argument("--x0", type=_floats)
    s.add_argument("--f", help="clock for the perpetual integral column (default: the model's)")

    s = sub.add_parser("verify-timechange", parents=[common], help="compare the laws of T_theta and theta")
    s.add_argument("--model")
    s.add_argument("--f", default=None, help="clock: inv-quartic, inv-quadratic, one, const=k")
    s.add_argument("--p-t-max", type=float, default=math.inf, help="horizon of the P-paths")
    s.add_argument("--p-r-trunc", type=float, default=8192.0, help="truncation radius of the P-paths")

    s = sub.add_parser("test", help="analytic tests")
    tsub = s.add_subparsers(dest="which", parser_class=_Parser)
    t = tsub.add_parser("radial", parents=[common])
    t.add_argument("--p", type=float, required=True, help="s(r) = (1+r)^p")
    t.add_argument("--x0", type=float, default=0.0, help="|x0|")
    t.add_argument("--d", type=int, default=3)
    t = tsub.add_parser("fuchsian", parents=[common])
    t.add_argument("--g", default="quartic")
    t.add_argument("--d", type=int, default=3)
    t.add_argument("--x0", type=_floats)
    t = tsub.add_parser("feller", parents=[common])
    t.add_argument("--model", default="feller:m=xabsx")
    t = tsub.add_parser("khasminskii", parents=[common])
    t.add_argument("--preset", choices=["fuchsian-quartic", "bm-drift"])
    t.add_argument("--alpha", type=float, help="A(u) = u^alpha (envelope-free integral check)")
    t.add_argument("--beta", type=float, help="B(u) = beta/u")
    t.add_argument("--lo", type=float, default=1.0)

    s = sub.add_parser("dichotomy", parents=[common], help="three-route absolute continuity check")
    s.add_argument("--model")
    s.add_argument("--x0", type=_floats)

    s = sub.add_parser("market", parents=[common], help="martingale-measure check of a price process")
    s.add_argument("--a", default="one", choices=sorted(MARKETS))
    s.add_argument("--ladder", type=_floats, default=[1.0, 5.0, 20.0, 50.0])

    s = sub.add_parser("counterexample", parents=[common], help="growth-sharpness construction")
    s.add_argument("--rho", default="linear", choices=sorted(RHO_PROFILES))
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--n-balls", type=_ints, default=[2, 3, 4, 5, 6], dest="n_balls")

    s = sub.add_parser("accept", parents=[common], help="run the acceptance suite")
    s.add_argument("--quick", action="store_true", help="reduced sample sizes, criterion 9 skipped")
    s.add_argument("--only", type=_ints, help="criterion numbers to run")
    return p


def _experiment_config(args, default_model: Optional[str] = None, default_n: int = 1000) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig(n_paths=default_n)
    if cfg.model is None:
        cfg.model = getattr(args, "model", None) or default_model
    elif getattr(args, "model", None):
        cfg.model = args.model
    if getattr(args, "x0", None) is not None and isinstance(args.x0, list):
        cfg.x0 = args.x0
    if args.n_paths is not None:
        cfg.n_paths = args.n_paths
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.t_max is not None:
        cfg.sim["t_max"] = args.t_max
    if args.workers is not None:
        cfg.sim["workers"] = args.workers
    if args.out:
        cfg.output = args.out
    return cfg


def _x0(cfg: ExperimentConfig, model) -> np.ndarray:
    if cfg.x0 is None:
        return model.x0
    x0 = np.asarray(cfg.x0, dtype=float)
    if x0.shape != (model.dim,):
        raise ConfigError(f"x0 has {x0.size} entries, model {model.id} has dimension {model.dim}")
    return x0


def _code(verdicts: Sequence[Verdict]) -> int:
    return EXIT_INCONCLUSIVE if any(v.outcome is Outcome.INCONCLUSIVE for v in verdicts) else EXIT_OK


def _finish(cfg: ExperimentConfig, command: str, verdicts: dict, evidence, t0: float, samples=None,
            columns=None, code: Optional[int] = None, extra_timing=None) -> int:
    out = write_run(cfg.output, command, cfg.to_dict(), verdicts, evidence, time.perf_counter() - t0, samples,
                    columns, extra_timing)
    print(dumps({"command": command, "verdicts": verdicts, "results": str(out)}), end="")
    return EXIT_OK if code is None else code


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    cfg = _experiment_config(args, "bm3")
    m = build_model(cfg.model)
    f = clock_field(args.f, m.dim) if args.f else m.clock
    sim = cfg.sim_config("simulate", record=True)
    rows = []
    for ch in iter_path_chunks(m.field, _x0(cfg, m), sim, cfg.n_paths):
        for p in ch:
            pi = perpetual_integral(p, f)
            rows.append({"path_index": p.path_index, "status": p.status.value, "theta_hat": p.theta_hat,
                         "perpetual_value": pi.value, "clock_kind": pi.kind.value})
    v = explosion_verdict(m.field, _x0(cfg, m), cfg.n_paths, sim)
    return _finish(cfg, "simulate", {"explosion": v.outcome.value}, {"explosion": v.as_dict(), "clock": f.name},
                   t0, rows, ["path_index", "status", "theta_hat", "perpetual_value", "clock_kind"], _code([v]))


def cmd_verify_timechange(args) -> int:
    t0 = time.perf_counter()
    cfg = _experiment_config(args, "bm3", 2000)
    m = build_model(cfg.model)
    f = clock_field(args.f or cfg.params.get("f", "inv-quartic"), m.dim)
    cfg.params.setdefault("f", f.name)
    q = cfg.sim_config("verify-timechange-q")
    p = cfg.sim_config("verify-timechange-p", t_max=args.p_t_max, r_trunc=args.p_r_trunc)
    rep = verify_timechange_law(m.field, f, _x0(cfg, m), cfg.n_paths, p, q)
    d = rep.as_dict()
    match = rep.ks.D < rep.ks.critical_1pct and rep.ks.mass_gap < 0.03
    verdicts = {"laws_match": bool(match), "low_power": rep.low_power}
    return _finish(cfg, "verify-timechange", verdicts, d, t0, rep.rows,
                   ["path_index", "status", "theta_hat", "perpetual_value", "clock_kind"],
                   EXIT_INCONCLUSIVE if rep.low_power else EXIT_OK)


def cmd_test(args) -> int:
    t0 = time.perf_counter()
    cfg = _experiment_config(args)
    which = args.which
    if which == "radial":
        s = ScalarField.profile(lambda r: (1.0 + r) ** args.p, f"(1+r)^{args.p:g}")
        cfg.params.update(p=args.p, x0=args.x0, d=args.d)
        v = radial_explosion_test(s, args.x0, d=args.d)
    elif which == "fuchsian":
        g = g_field(args.g, args.d)
        x0 = np.zeros(args.d) if args.x0 is None else np.asarray(args.x0, dtype=float)
        cfg.params.update(g=args.g, d=args.d, x0=x0.tolist())
        v = fuchsian_test(g, x0, args.d)
    elif which == "feller":
        m = build_model(args.model)
        if m.profiles is None:
            raise ConfigError(f"model {m.id} is not one-dimensional")
        cfg.model = m.id
        res = feller_test_1d(*m.profiles, float(m.x0[0]))
        v = Verdict({"ExplodesAS": Outcome.EXPLOSIVE, "ConservativeAS": Outcome.CONSERVATIVE}.get(
            res.outcome.value, Outcome.INCONCLUSIVE))
        v.add("feller", res.as_dict(), note=res.diagnostic)
    elif which == "khasminskii":
        if args.preset is None:
            return _nested_only(args, cfg, t0)
        v = _khasminskii(args, cfg)
    else:
        raise UsageError("test needs one of: radial, fuchsian, feller, khasminskii")
    return _finish(cfg, f"test {which}", {which: v.outcome.value}, v.as_dict(), t0, code=_code([v]))


def _khasminskii(args, cfg) -> Verdict:
    if args.preset == "fuchsian-quartic":
        m = build_model("fuchsian:g=quartic")
        A = ScalarField.profile(lambda u: 2 * u * (2 + 4 * u * u), "2u(2+4u^2)")
        B = ScalarField.profile(lambda u: 1.5 / u, "1.5/u")
        cfg.model = m.id
        return khasminskii_verdict(m.field, m.x0, (IntegralTestSpec(A, B, 0.5), None))
    m = build_model("bmdrift")
    A = ScalarField.profile(lambda u: 2 * u, "2u")
    B = ScalarField.profile(lambda u: 0.5 / u, "0.5/u")
    cfg.model = m.id
    return khasminskii_verdict(m.field, m.x0, (None, IntegralTestSpec(A, B, 1.0)))


def _nested_only(args, cfg, t0) -> int:
    """The nested integral for ``A(u) = u^alpha``, ``B(u) = beta/u`` without any field."""
    if args.alpha is None or args.beta is None:
        raise UsageError("khasminskii needs --preset or both --alpha and --beta")
    al, be = args.alpha, args.beta
    spec = IntegralTestSpec(ScalarField.profile(lambda u: u ** al, f"u^{al:g}"),
                            ScalarField.profile(lambda u: be / u, f"{be:g}/u"), args.lo)
    tri, partial, res = nested_integral_converges(spec)
    cfg.params.update(alpha=al, beta=be, lo=args.lo)
    evidence = {"tri": tri.value, "value": res.value, "partial_values": partial, "diagnostic": res.diagnostic}
    return _finish(cfg, "test khasminskii", {"nested_integral_finite": tri.value}, evidence, t0,
                   code=EXIT_INCONCLUSIVE if tri is Tri.UNDETERMINED else EXIT_OK)


def cmd_dichotomy(args) -> int:
    t0 = time.perf_counter()
    cfg = _experiment_config(args, "fuchsian:g=quartic")
    m = build_model(cfg.model)
    if m.field.girsanov is None:
        raise ConfigError(f"model {m.id} has no Girsanov direction")
    v = dichotomy_verdict(m.field, _x0(cfg, m), cfg.n_paths, cfg.sim_config("dichotomy"))
    return _finish(cfg, "dichotomy", {"dichotomy": v.outcome.value}, v.as_dict(), t0, code=_code([v]))


def cmd_market(args) -> int:
    t0 = time.perf_counter()
    cfg = _experiment_config(args)
    cfg.model = f"market:a={args.a}"
    spec = MARKETS[args.a]()
    sim = cfg.sim_config("market")
    v = martingale_measure_check(spec, cfg.n_paths, sim, args.ladder)
    curve = expected_price_curve(spec, args.ladder, cfg.n_paths, sim)
    verdicts = {f"asset{spec.asset + 1}": v.outcome.value}
    evidence = {"check": v.as_dict(), "n_truncated_numeraire": curve.n_truncated}
    if args.a in MARKET_PROFILES:
        mc = one_dim_mart_criterion(MARKET_PROFILES[args.a])
        verdicts["martingale"] = mc.outcome.value
        evidence["one_dim_criterion"] = mc.as_dict()
    rows = curve.as_rows()
    return _finish(cfg, "market", verdicts, evidence, t0, rows, list(rows[0].keys()), _code([v]))


def cmd_counterexample(args) -> int:
    t0 = time.perf_counter()
    cfg = _experiment_config(args, default_n=1000)
    cfg.model = f"counterexample:rho={args.rho}"
    rho = ScalarField.profile(RHO_PROFILES[args.rho], args.rho)
    out = counterexample_experiment(rho, args.d, args.n_balls, cfg.n_paths, cfg.sim_config("counterexample"))
    ok = out["bound_ok"] and out["explosion"]["p_hat"] >= 0.9 and out["partial_sums_increasing"]
    verdicts = {"pointwise_bound": out["bound_ok"], "explosion_fraction": out["explosion"]["p_hat"],
                "partial_sums_increasing": out["partial_sums_increasing"]}
    return _finish(cfg, "counterexample", verdicts, out, t0, code=EXIT_OK if ok else EXIT_INCONCLUSIVE)


def _run_acceptance(cfg: ExperimentConfig, quick: bool, only=None, echo=print) -> tuple:
    scale = acceptance.Scale.quick_scale() if quick else acceptance.Scale()
    res = acceptance.run_criteria(scale, cfg.master_seed, only, echo)
    return res, {f"criterion_{r.number}": ("PASS" if r.passed else "FAIL") for r in res}


def cmd_accept(args) -> int:
    t0 = time.perf_counter()
    cfg = _experiment_config(args)
    cfg.params.update(quick=bool(args.quick))
    res, verdicts = _run_acceptance(cfg, args.quick, set(args.only) if args.only else None)
    if not args.quick and (not args.only or 9 in args.only):
        runs = itertools.count(1)

        def quick_run():
            sub = Path(cfg.output) / f"determinism-{next(runs)}"
            main(["accept", "--quick", "--out", str(sub), "--seed", str(cfg.master_seed)], echo=False)
            return load_results(sub / "results.json")

        r9 = acceptance.criterion_determinism(cfg.master_seed, quick_run)
        print(r9.line())
        res.append(r9)
        verdicts["criterion_9"] = "PASS" if r9.passed else "FAIL"
    evidence = {f"criterion_{r.number}": r.as_dict() for r in res}
    timing = {"criteria_s": {f"criterion_{r.number}": round(r.runtime_s, 3) for r in res}}
    code = EXIT_OK if all(r.passed for r in res) else EXIT_INCONCLUSIVE
    out = write_run(cfg.output, "accept --quick" if args.quick else "accept", cfg.to_dict(), verdicts, evidence,
                    time.perf_counter() - t0, extra_timing=timing)
    print(f"results: {out}")
    return code


COMMANDS = {
    "simulate": cmd_simulate, "verify-timechange": cmd_verify_timechange, "test": cmd_test,
    "dichotomy": cmd_dichotomy, "market": cmd_market, "counterexample": cmd_counterexample, "accept": cmd_accept,
}


def main(argv: Optional[Sequence[str]] = None, echo: bool = True) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
        if args.command == "test" and args.which is None:
            raise UsageError("test needs one of: radial, fuchsian, feller, khasminskii")
        if not echo:
            import contextlib
            import io as _io

            with contextlib.redirect_stdout(_io.StringIO()):
                return COMMANDS[args.command](args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (UnknownModel, ConfigError, CoefficientError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_ERROR


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    return main(argv)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
