"""Config-driven experiment runner.

Every subcommand writes ``<out>/<subcommand>.csv`` with the columns
``quantity, n, value, stderr, n_samples, method, seed, config_hash`` and a
flat ``key=value`` manifest ``<out>/manifest.txt``.  Exit codes: 0 ok,
2 configuration error, 3 numeric guard tripped, 4 oracle failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .asymptote import (
    positivity_probs,
    rate_B_n,
    rate_prediction,
    slowly_varying_l1_hat,
    spitzer_rho,
)
from .config import Config, ConfigError, build_f, build_model, load
from .estimators import (
    estimate_bigjump_numerator,
    estimate_C1,
    estimate_C3,
    estimate_C4,
    estimate_C5,
    estimate_drift_constant,
    estimate_EF_ladder,
    estimate_tau_tail,
)
from .renewal import Flavor, is_skipfree_down, renewal_estimate, skipfree_table
from .results import Estimate
from .selftest import run_all
from .steps import as_lattice, negate
from .tilt import RegimeTag, regime_classify
from .walk import exact_lattice_dp

__all__ = ["Row", "main", "run", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERIC", "EXIT_ORACLE"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ORACLE = 0, 2, 3, 4
COLUMNS = ("quantity", "n", "value", "stderr", "n_samples", "method", "seed", "config_hash")
DP_STATE_LIMIT = 1 << 20


class OracleFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class Row:
    quantity: str
    n: object
    value: float
    stderr: float
    n_samples: int
    method: str


def _row(quantity: str, n, est: Estimate) -> Row:
    return Row(quantity, n, est.value, est.stderr, est.n_samples,
               est.method + (":log" if est.log_domain else ""))


def _seed(cfg: Config, tag: int, index: int = 0) -> int:
    ss = np.random.SeedSequence([cfg["mc.seed"], tag, index])
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def ladder(cfg: Config) -> list[int]:
    return [cfg["regime.n0"] * 2**j for j in range(cfg["regime.rungs"])]


class _Ctx:
    def __init__(self, cfg: Config):
        self.cfg = cfg
        self.model = build_model(cfg)
        self.f = build_f(cfg)
        self.regime = regime_classify(self.model, self.f)
        self.report = self.regime.report
        self.nsim = cfg["mc.nsim"]
        self.workers = cfg["mc.workers"]
        self.log: list[str] = []
        self.rows: list[Row] = []

    def say(self, text: str) -> None:
        self.log.append(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_classify(ctx: _Ctx) -> list[Row]:
    rep, tag = ctx.report, ctx.regime.tag.value
    ctx.say(f"regime={tag}")
    for name in ("lambda_star", "rho_factor", "phi_at_lambda", "tilted_mean", "theta_f"):
        ctx.say(f"{name}={getattr(rep, name)!r}")
    ctx.say(f"boundary={rep.boundary.value}")
    if ctx.regime.reason:
        ctx.say(f"reason={ctx.regime.reason}")
    return [Row(name, "", float(getattr(rep, name)), 0.0, 0, tag)
            for name in ("lambda_star", "rho_factor", "phi_at_lambda", "tilted_mean")]


def _dp_ok(model, n: int) -> bool:
    lat = as_lattice(model)
    if lat is None:
        return False
    return (max(lat.offsets) - min(min(lat.offsets), 0) + 1) * n < DP_STATE_LIMIT


def _survival(ctx: _Ctx, ns: Sequence[int], model=None, tag: int = 1) -> list[Estimate]:
    model = ctx.model if model is None else model
    method = ctx.cfg["mc.method"]
    if method in ("auto", "exact") and _dp_ok(model, max(ns)):
        dp = exact_lattice_dp(model, max(ns), True, max_states=DP_STATE_LIMIT)
        return [Estimate(dp.survival(n), 0.0, 0, "dp-exact") for n in ns]
    if method == "exact":
        raise ConfigError("mc.method=exact needs a lattice model of moderate size")
    mc = method if method in ("plain", "bigjump") else "auto"
    return [estimate_tau_tail(model, n, ctx.nsim, _seed(ctx.cfg, tag, j), method=mc,
                              workers=ctx.workers) for j, n in enumerate(ns)]


def cmd_tau_tail(ctx: _Ctx) -> list[Row]:
    ns = ladder(ctx.cfg)
    return [_row("P(tau>n)", n, e) for n, e in zip(ns, _survival(ctx, ns))]


def _bigjump_sum(ctx: _Ctx, n: int, index: int) -> Estimate:
    parts = [estimate_bigjump_numerator(ctx.model, ctx.f, n, k, ctx.nsim,
                                        _seed(ctx.cfg, 20 + index, k), workers=ctx.workers)
             for k in range(1, ctx.cfg["regime.jumps"] + 1)]
    value = math.fsum(p.value for p in parts)
    se = math.sqrt(math.fsum(p.stderr**2 for p in parts))
    return Estimate(value, se, sum(p.n_samples for p in parts), "bigjump-sum")


def _expectations(ctx: _Ctx, ns: Sequence[int]) -> list[Estimate]:
    method = ctx.cfg["mc.method"]
    tag = ctx.regime.tag
    if method == "bigjump" or (method == "auto" and tag is RegimeTag.DRIFT_LAMBDA_ZERO_HEAVY):
        return [_bigjump_sum(ctx, n, j) for j, n in enumerate(ns)]
    tilted = method == "tilted" or (method == "auto" and ctx.report.lambda_star > 0)
    return estimate_EF_ladder(ctx.model, ctx.f, ns, ctx.nsim, _seed(ctx.cfg, 2), tilted=tilted,
                              workers=ctx.workers, report=ctx.report)


def cmd_estimate(ctx: _Ctx) -> list[Row]:
    ns = ladder(ctx.cfg)
    return [_row("E[F(I_n)]", n, e) for n, e in zip(ns, _expectations(ctx, ns))]


def _constant(ctx: _Ctx) -> tuple[str, Estimate, list[Row]]:
    cfg, tag = ctx.cfg, ctx.regime.tag
    seed = _seed(cfg, 3)
    k_max, eps = cfg["regime.k_max"], cfg["mc.eps"]
    if tag is RegimeTag.OSC_LAMBDA_ZERO:
        est = estimate_C1(ctx.model, ctx.f, None, k_max, ctx.nsim, eps, seed, workers=ctx.workers,
                          up_cap=cfg["mc.cap"])
        name = "C1"
    elif tag is RegimeTag.OSC_LAMBDA_EQ_THETA:
        est = estimate_C3(ctx.model, ctx.f, k_max, ctx.nsim, eps, seed, workers=ctx.workers,
                          report=ctx.report, up_cap=cfg["mc.cap"])
        name = "C3"
    elif tag is RegimeTag.DRIFT_LAMBDA_EQ_THETA:
        est = estimate_drift_constant(ctx.model, ctx.f, cfg["mc.cap"], ctx.nsim, seed, eps=eps,
                                      workers=ctx.workers, report=ctx.report)
        name = "K0*E[(1+I_hat)^-theta]"
    elif tag is RegimeTag.DRIFT_LAMBDA_ZERO_HEAVY:
        est = estimate_C4(ctx.model, ctx.f, cfg["regime.jumps"], ladder(cfg), ctx.nsim, seed,
                          workers=ctx.workers, strict=False)
        rows = [Row("C4(n)", n, v, s, ctx.nsim * cfg["regime.jumps"], "C4")
                for n, v, s in est.trace]
        return "C4", est, rows
    elif tag is RegimeTag.DRIFT_INTERIOR_HEAVY:
        est = estimate_C5(ctx.model, ctx.f, min(k_max, 256), None, ctx.nsim, seed,
                          workers=ctx.workers, eps=eps, horizon=cfg["mc.cap"], report=ctx.report)
        name = "C5"
    else:
        raise ConfigError(f"no limiting constant is estimated for regime {tag.value}")
    first = 1 if name == "C5" else 0
    rows = [Row(f"{name}-term", k, v, s, est.n_samples, name)
            for k, (v, s) in enumerate(est.trace or (), start=first)]
    return name, est, rows


def cmd_constants(ctx: _Ctx) -> list[Row]:
    name, est, rows = _constant(ctx)
    for key in ("K", "tail_bound", "truncation_rate", "up_truncation_rate", "monotone"):
        if key in est.info:
            ctx.say(f"{key}={est.info[key]}")
    return rows + [_row(name, "", est)]


def _denominators(ctx: _Ctx, ns: Sequence[int]) -> tuple[list[float], float]:
    """Normaliser per horizon and the factor multiplying the estimated constant."""
    tag, rep, f = ctx.regime.tag, ctx.report, ctx.f
    if tag is RegimeTag.OSC_LAMBDA_ZERO:
        return [e.value for e in _survival(ctx, ns, tag=5)], 1.0
    if tag is RegimeTag.OSC_LAMBDA_EQ_THETA:
        # rho**n P_tilt(tau_0^+ > n); the constant carries K0
        dual = negate(rep.tilted_model)
        if _dp_ok(dual, max(ns)):
            surv = [e.value for e in _survival(ctx, ns, dual, tag=5)]
            return [s * math.exp(n * rep.phi_at_lambda) for s, n in zip(surv, ns)], f.K0
        k_max = max(1024, 2 * max(ns))
        rho = spitzer_rho(rep.tilted_model, min(k_max, 4096), nsim=ctx.nsim,
                          rng=np.random.default_rng(_seed(ctx.cfg, 6))).value
        probs, _ = positivity_probs(rep.tilted_model, k_max, strict=True,
                                    rng=np.random.default_rng(_seed(ctx.cfg, 7)))
        return [math.exp(n * rep.phi_at_lambda - rho * math.log(n))
                * slowly_varying_l1_hat(None, n, k_max, rho, probs).value for n in ns], f.K0
    if tag is RegimeTag.DRIFT_LAMBDA_EQ_THETA:
        return [math.exp(n * rep.phi_at_lambda) for n in ns], 1.0
    if tag is RegimeTag.DRIFT_LAMBDA_ZERO_HEAVY:
        a = -ctx.model.mean()
        return [ctx.model.tail_prob(a * n) for n in ns], 1.0
    if tag is RegimeTag.DRIFT_INTERIOR_HEAVY:
        return [math.exp(n * rep.phi_at_lambda) * rate_B_n(rep.tilted_model, n) for n in ns], 1.0
    if tag is RegimeTag.OSC_INTERIOR:
        return [e.value for e in _survival(ctx, ns, tag=5)], math.nan
    raise ConfigError(f"no ratio experiment for regime {ctx.regime.tag.value}")


def _ratio(est: Estimate, denom: float, n: int) -> Estimate:
    if est.log_domain:
        return Estimate(math.exp(est.value - math.log(denom)),
                        math.exp(est.value - math.log(denom)) * est.stderr, est.n_samples,
                        "ratio")
    return Estimate(est.value / denom, est.stderr / denom, est.n_samples, "ratio")


def cmd_verify(ctx: _Ctx) -> list[Row]:
    ns = ladder(ctx.cfg)
    denoms, factor = _denominators(ctx, ns)
    ests = _expectations(ctx, ns)
    ratios = [_ratio(e, d, n) for e, d, n in zip(ests, denoms, ns)]
    rows = [_row("E[F(I_n)]", n, e) for n, e in zip(ns, ests)]
    rows += [Row("normaliser", n, d, 0.0, 0, "predicted-or-exact") for n, d in zip(ns, denoms)]
    rows += [_row("r_n", n, r) for n, r in zip(ns, ratios)]
    if len(ratios) >= 2:
        change = ratios[-1].value / ratios[-2].value - 1.0
        rows.append(Row("last_rung_rel_change", ns[-1], change, 0.0, 0, "diagnostic"))
        ctx.say(f"last_rung_rel_change={change!r}")
    if math.isnan(factor):
        ctx.say("no constant estimator for this regime; stabilisation only")
        return rows
    name, est, trace_rows = _constant(ctx)
    if ctx.regime.tag is RegimeTag.DRIFT_LAMBDA_ZERO_HEAVY:
        rows += trace_rows
    const = Estimate(est.value * factor, est.stderr * factor, est.n_samples, est.method)
    rows.append(_row(name if factor == 1.0 else f"K0*{name}", "", const))
    last = ratios[-1]
    lo1, hi1 = last.ci()
    lo2, hi2 = const.ci()
    overlap = float(lo1 <= hi2 and lo2 <= hi1)
    rel = last.value / const.value - 1.0
    rows.append(Row("ci_overlap", ns[-1], overlap, 0.0, 0, "diagnostic"))
    rows.append(Row("rel_diff_to_constant", ns[-1], rel, 0.0, 0, "diagnostic"))
    ctx.say(f"r_last={last.value!r} constant={const.value!r} rel_diff={rel!r} "
            f"ci_overlap={bool(overlap)}")
    return rows


def cmd_renewal(ctx: _Ctx) -> list[Row]:
    cfg = ctx.cfg
    flavor = Flavor(cfg["renewal.flavor"].capitalize())
    walk = ctx.model if flavor is Flavor.DESCENDING else negate(ctx.model)
    if is_skipfree_down(walk):
        lat = as_lattice(walk)
        table = skipfree_table(lat.spacing, cfg["renewal.x_max"], flavor)
    else:
        table = renewal_estimate(ctx.model, flavor, cfg["renewal.x_max"], cfg["renewal.chains"],
                                 cfg["mc.cap"], _seed(cfg, 8), points=cfg["renewal.points"],
                                 workers=ctx.workers)
    name = "V" if flavor is Flavor.DESCENDING else "V_hat"
    ctx.say(f"provenance={table.provenance.value} slope={table.slope!r}")
    used = cfg["renewal.chains"] if table.provenance.value == "MonteCarlo" else 0
    return [Row(name, x, v, s, used, table.provenance.value)
            for x, v, s in table.rows()]


def cmd_rates(ctx: _Ctx) -> list[Row]:
    ns = ladder(ctx.cfg)
    pred = rate_prediction(ctx.model, ctx.f, ns)
    for key, value in sorted(pred.ingredients.items()):
        ctx.say(f"ingredient.{key}={value!r}")
    return [Row("log_rate", n, v, 0.0, 0, pred.regime.value) for n, v in zip(ns, pred.log_rates)]


def cmd_selftest(ctx: _Ctx) -> list[Row]:
    results = run_all()
    rows = []
    for r in results:
        ctx.say(f"{'PASS' if r.ok else 'FAIL'} {r.name} error={r.error:.3g} tol={r.tol:g}")
        rows.append(Row(r.name, "", float(r.error), 0.0, 0, "pass" if r.ok else "fail"))
    if not all(r.ok for r in results):
        ctx.rows = rows
        raise OracleFailure("oracle suite failed: "
                            + ", ".join(r.name for r in results if not r.ok))
    return rows


COMMANDS: dict[str, Callable[[_Ctx], list[Row]]] = {
    "classify": cmd_classify,
    "tau-tail": cmd_tau_tail,
    "estimate": cmd_estimate,
    "constants": cmd_constants,
    "verify": cmd_verify,
    "renewal": cmd_renewal,
    "rates": cmd_rates,
    "selftest": cmd_selftest,
}


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: Path, rows: Sequence[Row], seed: int, cfg_hash: str) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([r.quantity, _fmt(r.n), _fmt(float(r.value)), _fmt(float(r.stderr)),
                        r.n_samples, r.method, seed, cfg_hash])


def write_manifest(path: Path, entries: dict) -> None:
    lines = [f"{k}={str(v).replace(chr(10), ' ')}" for k, v in entries.items()]
    path.write_text("\n".join(lines) + "\n")


def run(subcommand: str, config_path: str | None = None, overrides: Sequence[str] = (),
        out_dir: str | Path = ".", stream=None) -> int:
    """Run one subcommand; returns the exit status and leaves artifacts in ``out_dir``."""
    stream = sys.stdout if stream is None else stream
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "subcommand": subcommand,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    cfg = None
    ctx = None
    try:
        if subcommand not in COMMANDS:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        cfg = load(config_path, overrides)
        manifest.update(seed=cfg["mc.seed"], config_hash=cfg.hash)
        ctx = _Ctx(cfg)
        rows = COMMANDS[subcommand](ctx)
        code, status = EXIT_OK, "ok"
    except ConfigError as exc:
        code, status, error = EXIT_CONFIG, "config-error", exc
    except OracleFailure as exc:
        code, status, error = EXIT_ORACLE, "oracle-failure", exc
    except (RuntimeError, ArithmeticError) as exc:
        code, status, error = EXIT_NUMERIC, "numeric-guard", exc
    except (ValueError, TypeError) as exc:
        code, status, error = EXIT_CONFIG, "config-error", exc
    if code != EXIT_OK:
        manifest.update(error_type=type(error).__name__, error_message=str(error))
        print(f"error: status={status} exit={code} type={type(error).__name__} "
              f"message={error}", file=sys.stderr)
        rows = ctx.rows if ctx is not None else []
    manifest.update(status=status, exit_code=code)
    if cfg is not None:
        csv_path = out / f"{subcommand}.csv"
        write_csv(csv_path, rows, cfg["mc.seed"], cfg.hash)
        manifest.update(csv=csv_path.name, rows=len(rows))
        manifest.update({f"config.{line.split('=', 1)[0]}": line.split("=", 1)[1]
                         for line in cfg.lines()})
    if ctx is not None:
        for line in ctx.log:
            print(line, file=stream)
    write_manifest(out / "manifest.txt", manifest)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expwalk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("-c", "--config", help="key=value config file (reference config if absent)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    parser.add_argument("-o", "--out", default=".", help="output directory (default: .)")
    parser.add_argument("-j", "--workers", type=int, help="shorthand for --set mc.workers=N")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.workers is not None:
        overrides.append(f"mc.workers={args.workers}")
    return run(args.subcommand, args.config, overrides, args.out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
