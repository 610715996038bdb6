"""Command-line front end.

Subcommands: ``age``, ``cycle``, ``limits``, ``simulate``, ``compare`` and
``sweep``.  Every CSV starts with ``#``-prefixed provenance lines (tool
version, the exact command, the resolved configuration, and headline
numbers) so that a file documents how to rebuild itself; nothing
time-dependent is written, which keeps reruns byte-identical.

Configuration is resolved in three layers: the built-in reference sensor,
then an optional ``--config`` JSON file, then explicit flags.  The channel
is given either as ``--pout`` or through the Rayleigh flag set; mixing the
two is rejected.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import pathlib
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .arrivals import (
    Deterministic,
    Exponential,
    GammaArrival,
    load_tabulated,
)
from .channel import outage_probability
from .delay import Pmf, summary, update_age_pmf, update_cycle_pmf
from .errors import ConfigError, GridOverflowError
from .params import (
    DirectChannel,
    ProtocolParams,
    RayleighChannel,
    ValidatedConfig,
    config_to_dict,
    dbm_to_watts,
    default_config,
    energy_from_power_mw,
    load_config,
    validate,
)
from .simulator import compare, empirical_pmf, simulate

_REFERENCE_CHANNEL = default_config().channel


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="JSON config file (flags override it)")
    g.add_argument("--model", choices=("det", "exp", "gamma", "table"),
                   help="arrival model; required when giving model flags")
    g.add_argument("--rho", type=float, help="mean harvest per block, uJ "
                   "(det/exp models)")
    g.add_argument("--shape", type=float, help="gamma shape")
    g.add_argument("--scale", type=float, help="gamma scale, uJ")
    g.add_argument("--table", help="CSV of energy_uJ,density_per_uJ "
                   "(table model)")
    g.add_argument("--w", type=int, help="retransmission window, blocks")
    g.add_argument("--esen", type=float, help="sensing energy, uJ")
    g.add_argument("--etx", type=float, help="transmission energy, uJ")
    g.add_argument("--psen-mw", type=float,
                   help="sensing power, mW (converted via block length)")
    g.add_argument("--ptx-mw", type=float,
                   help="transmission power, mW (converted via block length)")
    g.add_argument("--block-ms", type=float, help="block length, ms")
    c = p.add_argument_group("channel (either --pout or the Rayleigh set)")
    c.add_argument("--pout", type=float, help="outage probability")
    c.add_argument("--dist-m", type=float, help="link distance, m")
    c.add_argument("--path-loss-exp", type=float, help="path-loss exponent")
    c.add_argument("--noise-dbm", type=float, help="noise power, dBm")
    c.add_argument("--gamma0-db", type=float, help="SNR outage threshold, dB")
    c.add_argument("--prf-dbm", type=float, help="RF transmit power, dBm")
    c.add_argument("--gamma-factor", type=float,
                   help="path-loss scale factor")


def _arrival_from_flags(args) -> object:
    if args.model == "det":
        return Deterministic(50.0 if args.rho is None else args.rho)
    if args.model == "exp":
        return Exponential(50.0 if args.rho is None else args.rho)
    if args.model == "gamma":
        shape = 0.05 if args.shape is None else args.shape
        scale = 1000.0 if args.scale is None else args.scale
        return GammaArrival(shape, scale)
    if args.table is None:
        raise ConfigError("--model table needs --table <csv>")
    return load_tabulated(args.table)


def _resolve_config(args) -> ValidatedConfig:
    cfg = load_config(args.config) if args.config else default_config()

    block = cfg.protocol.block_seconds
    if args.block_ms is not None:
        block = args.block_ms * 1e-3
    if args.esen is not None and args.psen_mw is not None:
        raise ConfigError("--esen and --psen-mw are mutually exclusive")
    if args.etx is not None and args.ptx_mw is not None:
        raise ConfigError("--etx and --ptx-mw are mutually exclusive")
    e_sen = cfg.protocol.e_sen
    if args.esen is not None:
        e_sen = args.esen
    elif args.psen_mw is not None:
        e_sen = energy_from_power_mw(args.psen_mw, block)
    e_tx = cfg.protocol.e_tx
    if args.etx is not None:
        e_tx = args.etx
    elif args.ptx_mw is not None:
        e_tx = energy_from_power_mw(args.ptx_mw, block)
    protocol = ProtocolParams(w=cfg.protocol.w if args.w is None else args.w,
                              e_sen=e_sen, e_tx=e_tx, block_seconds=block)

    if args.model is not None:
        arrival = _arrival_from_flags(args)
    else:
        for name in ("rho", "shape", "scale", "table"):
            if getattr(args, name) is not None:
                raise ConfigError(f"--{name} needs --model")
        arrival = cfg.arrival

    ray_flags = {
        "distance_m": args.dist_m,
        "path_loss_exp": args.path_loss_exp,
        "noise_watts": None if args.noise_dbm is None
        else dbm_to_watts(args.noise_dbm),
        "snr_threshold": None if args.gamma0_db is None
        else 10.0 ** (args.gamma0_db / 10.0),
        "rf_power_watts": None if args.prf_dbm is None
        else dbm_to_watts(args.prf_dbm),
        "path_loss_factor": args.gamma_factor,
    }
    any_ray = any(v is not None for v in ray_flags.values())
    if args.pout is not None and any_ray:
        raise ConfigError(
            "give either --pout or the Rayleigh flag set, not both")
    if args.pout is not None:
        channel = DirectChannel(args.pout)
    elif any_ray:
        base = cfg.channel if isinstance(cfg.channel, RayleighChannel) \
            else _REFERENCE_CHANNEL
        channel = dataclasses.replace(
            base, **{k: v for k, v in ray_flags.items() if v is not None})
    else:
        channel = cfg.channel
    return validate(protocol, arrival, channel)


def _resolve_pout(cfg: ValidatedConfig) -> float:
    if cfg.channel is None:
        raise ConfigError(
            "no channel given; add --pout or the Rayleigh flags")
    return outage_probability(cfg.channel)


def _command_line(args) -> str:
    return shlex.join(["ehdelay"] + list(args._argv))


def _provenance(args, cfg: ValidatedConfig, extra: dict) -> list[str]:
    lines = [
        f"# ehdelay {__version__}",
        f"# command: {_command_line(args)}",
        f"# config: {json.dumps(config_to_dict(cfg), sort_keys=True)}",
    ]
    lines += [f"# {k}: {json.dumps(v)}" for k, v in extra.items()]
    return lines


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        pathlib.Path(out).write_text(text)


def _pmf_csv(args, cfg: ValidatedConfig, pmf: Pmf, p_out: float,
             p_suc: float) -> str:
    extra = {"p_out": p_out, "p_suc": p_suc, "mean": pmf.mean,
             "tail_mass": pmf.tail_mass}
    lines = _provenance(args, cfg, extra)
    lines.append("k_blocks,probability")
    for k, pr in zip(pmf.support(), pmf.probs):
        lines.append(f"{k},{float(pr)!r}")
    return "\n".join(lines) + "\n"


def _pmf_json(args, cfg: ValidatedConfig, pmf: Pmf, p_out: float,
              p_suc: float) -> str:
    doc = {
        "version": __version__,
        "command": _command_line(args),
        "config": config_to_dict(cfg),
        "p_out": p_out,
        "p_suc": p_suc,
        "min_support": pmf.min_support,
        "probability": [float(x) for x in pmf.probs],
        "tail_mass": pmf.tail_mass,
        "mean": pmf.mean,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _cmd_pmf(args, which: str) -> int:
    cfg = _resolve_config(args)
    p_out = _resolve_pout(cfg)
    kw = {"eps_tail": args.eps_tail} if which == "cycle" else {}
    fn = update_age_pmf if which == "age" else update_cycle_pmf
    pmf = fn(cfg.protocol, cfg.arrival, p_out, grid_step=args.grid_step, **kw)
    s = summary(cfg.protocol, cfg.arrival, p_out, grid_step=args.grid_step)
    render = _pmf_json if args.json else _pmf_csv
    _emit(render(args, cfg, pmf, p_out, s.p_suc), args.out)
    return 0


def cmd_age(args) -> int:
    return _cmd_pmf(args, "age")


def cmd_cycle(args) -> int:
    return _cmd_pmf(args, "cycle")


def cmd_limits(args) -> int:
    cfg = _resolve_config(args)
    p_out = _resolve_pout(cfg)
    s = summary(cfg.protocol, cfg.arrival, p_out, grid_step=args.grid_step)
    doc = {
        "version": __version__,
        "command": _command_line(args),
        "config": config_to_dict(cfg),
        "p_out": s.p_out,
        "p_suc": s.p_suc,
        "mean_age": s.mean_age,
        "mean_cycle": s.mean_cycle,
        "limit_age": s.limit_age,
        "limit_cycle": s.limit_cycle,
    }
    _emit(json.dumps(doc, sort_keys=True, indent=2) + "\n", args.out)
    return 0


def _samples_csv(args, cfg, column: str, values) -> str:
    lines = _provenance(args, cfg, {"seed": args.seed,
                                    "n_updates": args.updates,
                                    "warmup": args.warmup})
    lines.append(column)
    if values.dtype.kind == "f":
        lines += [f"{float(v)!r}" for v in values]
    else:
        lines += [str(int(v)) for v in values]
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    p_out = _resolve_pout(cfg)
    res = simulate(cfg.protocol, cfg.arrival, p_out, n_updates=args.updates,
                   seed=args.seed, warmup=args.warmup)
    doc = {
        "version": __version__,
        "command": _command_line(args),
        "config": config_to_dict(cfg),
        "p_out": p_out,
        "seed": res.seed,
        "n_updates": res.n_updates,
        "warmup_discarded": res.warmup_discarded,
        "blocks_run": res.blocks_run,
        "mean_age": float(res.update_ages.mean()),
        "mean_cycle": float(res.update_cycles.mean()),
        "mean_failed_windows": float(res.fails_between_updates.mean()),
    }
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if args.out is None:
        sys.stdout.write(text)
        return 0
    prefix = pathlib.Path(args.out)
    parts = [
        ("ages", "age_blocks", res.update_ages),
        ("cycles", "cycle_blocks", res.update_cycles),
        ("fails", "failed_windows", res.fails_between_updates),
        ("residuals", "residual_uJ", res.post_tb_energies),
    ]
    for stem, column, values in parts:
        path = prefix.parent / f"{prefix.name}_{stem}.csv"
        path.write_text(_samples_csv(args, cfg, column, values))
    (prefix.parent / f"{prefix.name}_summary.json").write_text(text)
    return 0


def cmd_compare(args) -> int:
    cfg = _resolve_config(args)
    p_out = _resolve_pout(cfg)
    res = simulate(cfg.protocol, cfg.arrival, p_out, n_updates=args.updates,
                   seed=args.seed, warmup=args.warmup)
    doc = {
        "version": __version__,
        "command": _command_line(args),
        "config": config_to_dict(cfg),
        "p_out": p_out,
        "seed": args.seed,
        "n_updates": args.updates,
    }
    pairs = (
        ("age", update_age_pmf(cfg.protocol, cfg.arrival, p_out,
                               grid_step=args.grid_step),
         res.update_ages),
        ("cycle", update_cycle_pmf(cfg.protocol, cfg.arrival, p_out,
                                   grid_step=args.grid_step,
                                   eps_tail=args.eps_tail),
         res.update_cycles),
    )
    for name, analytic, samples in pairs:
        got = compare(analytic, empirical_pmf(samples))
        doc[name] = {"tv": got.tv_distance, "ks": got.ks_statistic,
                     "mean_gap": got.mean_gap}
    _emit(json.dumps(doc, sort_keys=True, indent=2) + "\n", args.out)
    return 0


_SWEEP_PARAMS = ("w", "rho-dbm", "psen-mw", "ptx-mw", "prf-dbm")


def _sweep_values(args) -> list[float]:
    if args.values is not None:
        if args.start is not None or args.stop is not None \
                or args.step is not None:
            raise ConfigError("--values excludes --start/--stop/--step")
        try:
            vals = [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"bad --values list: {args.values!r}") from None
    else:
        if args.start is None or args.stop is None:
            raise ConfigError("need --values or --start and --stop")
        step = 1.0 if args.step is None else args.step
        if step <= 0:
            raise ConfigError("--step must be positive")
        n = int(np.floor((args.stop - args.start) / step + 1e-9)) + 1
        vals = [args.start + i * step for i in range(max(n, 0))]
    if not vals:
        raise ConfigError("sweep produced no values")
    return vals


def _sweep_point(cfg: ValidatedConfig, param: str, value: float) \
        -> ValidatedConfig:
    protocol, arrival, channel = cfg.protocol, cfg.arrival, cfg.channel
    if param == "w":
        if abs(value - round(value)) > 1e-9:
            raise ConfigError("window values must be integers")
        protocol = dataclasses.replace(protocol, w=int(round(value)))
    elif param == "rho-dbm":
        rho = energy_from_power_mw(dbm_to_watts(value) * 1e3,
                                   protocol.block_seconds)
        if isinstance(arrival, (Deterministic, Exponential)):
            arrival = dataclasses.replace(arrival, rho=rho)
        elif isinstance(arrival, GammaArrival):
            arrival = dataclasses.replace(arrival, scale=rho / arrival.shape)
        else:
            raise ConfigError(
                "harvest-power sweep is not defined for tabulated arrivals")
    elif param == "psen-mw":
        protocol = dataclasses.replace(
            protocol, e_sen=energy_from_power_mw(value,
                                                 protocol.block_seconds))
    elif param == "ptx-mw":
        protocol = dataclasses.replace(
            protocol, e_tx=energy_from_power_mw(value,
                                                protocol.block_seconds))
    else:
        if not isinstance(channel, RayleighChannel):
            raise ConfigError("--param prf-dbm needs a Rayleigh channel")
        channel = dataclasses.replace(channel,
                                      rf_power_watts=dbm_to_watts(value))
    return validate(protocol, arrival, channel)


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    values = _sweep_values(args)
    points = []
    for v in values:
        try:
            points.append(_sweep_point(cfg, args.param, v))
        except (ConfigError, ValueError) as e:
            raise ConfigError(f"sweep value {v!r}: {e}") from None

    def one(point: ValidatedConfig):
        p_out = _resolve_pout(point)
        return summary(point.protocol, point.arrival, p_out,
                       grid_step=args.grid_step)

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        rows = list(pool.map(one, points))

    lines = _provenance(args, cfg, {"param": args.param,
                                    "n_points": len(values)})
    lines.append("x,mean_age,mean_cycle,p_suc,limit_age,limit_cycle")
    for v, s in zip(values, rows):
        lines.append(",".join([
            f"{v!r}", f"{s.mean_age!r}", f"{s.mean_cycle!r}",
            f"{s.p_suc!r}", f"{s.limit_age!r}", f"{s.limit_cycle!r}",
        ]))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="ehdelay",
        description="Update age/cycle statistics of a harvest-then-use "
                    "sensor with a retransmission window.")
    top.add_argument("--version", action="version",
                     version=f"ehdelay {__version__}")
    sub = top.add_subparsers(dest="cmd", required=True)

    def common(p, *, sim=False):
        _add_config_flags(p)
        p.add_argument("--grid-step", type=float,
                       help="density grid cell, uJ")
        p.add_argument("--eps-tail", type=float, default=1e-9,
                       help="tail budget of the cycle pmf")
        p.add_argument("--out", help="write to this path instead of stdout")
        if sim:
            p.add_argument("--updates", type=int, default=100_000,
                           help="delivered updates to record")
            p.add_argument("--warmup", type=int, default=1000,
                           help="updates discarded before recording")
            p.add_argument("--seed", type=int, default=1)

    p_age = sub.add_parser("age", help="update-age pmf as CSV")
    common(p_age)
    p_age.add_argument("--json", action="store_true")
    p_age.set_defaults(func=cmd_age)

    p_cycle = sub.add_parser("cycle", help="update-cycle pmf as CSV")
    common(p_cycle)
    p_cycle.add_argument("--json", action="store_true")
    p_cycle.set_defaults(func=cmd_cycle)

    p_lim = sub.add_parser("limits",
                           help="success probability, means, and limits")
    common(p_lim)
    p_lim.set_defaults(func=cmd_limits)

    p_sim = sub.add_parser("simulate", help="block-level Monte Carlo")
    common(p_sim, sim=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_cmp = sub.add_parser("compare",
                           help="analytic vs simulated pmf distances")
    common(p_cmp, sim=True)
    p_cmp.set_defaults(func=cmd_compare)

    p_swp = sub.add_parser("sweep", help="mean age/cycle over a parameter")
    common(p_swp)
    p_swp.add_argument("--param", choices=_SWEEP_PARAMS, required=True)
    p_swp.add_argument("--values", help="comma-separated list")
    p_swp.add_argument("--start", type=float)
    p_swp.add_argument("--stop", type=float)
    p_swp.add_argument("--step", type=float)
    p_swp.add_argument("--jobs", type=int,
                       help="parallel workers for sweep points")
    p_swp.set_defaults(func=cmd_sweep)
    return top


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    try:
        ret = args.func(args)
        # flush here so a consumer that hung up (head, less) raises while
        # we can still catch; small outputs otherwise only hit EPIPE in the
        # interpreter's exit flush, which cannot be caught
        sys.stdout.flush()
        return ret
    except GridOverflowError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        # park stdout on devnull so the exit flush does not raise again
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 1


if __name__ == "__main__":
    sys.exit(main())
