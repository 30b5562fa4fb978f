"""Command-line front end: ``simulate``, ``verify``, ``bound`` and ``feasibility``.

Settings are layered: built-in defaults, then a preset or JSON config
file, then command-line flags (flags win).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis, beamform, schemes
from .errors import ButterflyError, ConfigurationError, DegenerateChannelError, InvalidCutError
from .netmodel import ChannelRealization, Topology, sample_channels

log = logging.getLogger("butterfly_dof")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_VERIFY = 4

PRESETS = ("thm1", "thm2", "cor1", "thm3", "cor2")


@dataclass(frozen=True)
class SimulationConfig:
    scheme: str = "no_cache"
    topology: str | None = None
    pdb: tuple[float, float, float] = (40.0, 100.0, 10.0)
    p: float | None = None
    seed: int = 7
    trials: int = 1
    tol_residual: float = 1e-9
    tol_rank: float = 1e-9
    tol_slope: float = 0.1
    h_min: float = 0.5
    h_max: float = 2.0
    max_retries: int = 10
    out: str | None = None
    slope_run: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.scheme not in analysis.SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; choose from {', '.join(analysis.SCHEMES)}")
        start, stop, step = self.pdb
        if step <= 0 or stop < start:
            raise ConfigurationError(f"bad power grid {start}:{stop}:{step}")
        if self.slope_run and stop - start < analysis.MIN_SPAN_DB:
            raise ConfigurationError(f"power grid spans {stop - start} dB, slope runs need {analysis.MIN_SPAN_DB:.0f}")
        if self.scheme == "cache_partial":
            if self.p is None:
                raise ConfigurationError("cache_partial needs --p")
        if self.p is not None and not 0.0 <= self.p <= 1.0:
            raise ConfigurationError(f"p must lie in [0, 1], got {self.p}")
        if min(self.tol_residual, self.tol_rank, self.tol_slope) <= 0:
            raise ConfigurationError("tolerances must be positive")
        if self.trials < 1:
            raise ConfigurationError("trials must be at least 1")
        self.resolved_topology()

    def resolved_topology(self) -> Topology:
        if self.topology is None:
            return analysis.default_topology(self.scheme)
        topo = Topology.parse(self.topology)
        if self.scheme in ("no_cache", "cache", "cache_partial") and topo.is_mimo:
            raise ConfigurationError(f"scheme {self.scheme} runs on the single-antenna topology only")
        if self.scheme in ("mimo", "mimo_no_side") and not topo.is_mimo:
            raise ConfigurationError(f"scheme {self.scheme} needs a multi-antenna topology")
        return topo

    def powers_db(self) -> list[float]:
        start, stop, step = self.pdb
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(n)]

    def seeds(self) -> list[int]:
        return [self.seed + t for t in range(self.trials)]


def parse_pdb(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}")
    try:
        return tuple(float(v) for v in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric power grid {text!r}") from None


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("butterfly_dof.presets").joinpath(f"{name}.json").read_text()
    return json.loads(text)


_FLAG_FIELDS = {
    "scheme": "scheme",
    "topology": "topology",
    "pdb": "pdb",
    "p": "p",
    "seed": "seed",
    "trials": "trials",
    "tol_residual": "tol_residual",
    "tol_rank": "tol_rank",
    "tol_slope": "tol_slope",
    "out": "out",
}


def build_config(args: argparse.Namespace, slope_run: bool = True, **defaults) -> SimulationConfig:
    values: dict = dict(defaults)
    if getattr(args, "preset", None):
        values.update(load_preset(args.preset))
    if getattr(args, "config", None):
        values.update(json.loads(Path(args.config).read_text()))
    for flag, name in _FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    values.pop("description", None)
    known = {f.name for f in dataclasses.fields(SimulationConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
    if "pdb" in values:
        pdb = values["pdb"]
        values["pdb"] = parse_pdb(pdb) if isinstance(pdb, str) else tuple(float(v) for v in pdb)
    return SimulationConfig(slope_run=slope_run, **values)


def _fmt(x: float) -> str:
    return format(x, ".17g")


def _dump_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


# ----------------------------------------------------------------------
# simulate

def simulate(cfg: SimulationConfig) -> dict:
    """Run the configured scheme over the power grid for every seed.

    Returns the CSV text, the fitted estimate and per-realization data.
    """
    topo = cfg.resolved_topology()
    pdb = cfg.powers_db()
    powers = [10.0 ** (d / 10.0) for d in pdb]
    channels, fits, all_rates = [], [], []
    for seed in cfg.seeds():
        ch = analysis.sample_usable(cfg.scheme, topo, seed, cfg.h_min, cfg.h_max, cfg.max_retries)
        pts = analysis.rate_sweep(cfg.scheme, ch, powers, cfg.p)
        channels.append(ch)
        all_rates.append([pt.rates for pt in pts])
        fits.append(analysis.dof_slope(pts, min_power=analysis.MIN_FIT_POWER))
    mean = np.mean(np.array(all_rates), axis=0)
    mean_pts = [analysis.RatePoint(P, tuple(r)) for P, r in zip(powers, mean)]
    overall = analysis.dof_slope(mean_pts, min_power=analysis.MIN_FIT_POWER)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["P_dB", "R1", "R2", "R3", "R4", "sum"])
    for d, pt in zip(pdb, mean_pts):
        writer.writerow([_fmt(d)] + [_fmt(r) for r in pt.rates] + [_fmt(pt.sum_rate)])

    dof = overall.to_dict()
    dof.update({
        "scheme": cfg.scheme,
        "p": cfg.p,
        "topology": topo.label,
        "realizations": [
            {"seed": ch.seed, **fit.to_dict()} for ch, fit in zip(channels, fits)
        ],
    })
    extra = {}
    top_power = powers[-1]
    reports = []
    for ch in channels:
        if cfg.scheme in ("mimo", "mimo_no_side"):
            sol = beamform.solve_v2(ch, top_power, cfg.tol_rank)
            extra.setdefault("beamformers", []).append({"seed": ch.seed, **sol.to_dict()})
            rep = beamform.run_mimo_scheme(ch, top_power, cfg.scheme == "mimo", sol)
        elif cfg.scheme == "no_cache":
            rep = schemes.no_cache_scheme(ch, top_power)
        else:
            rep = schemes.run_cache_scheme(ch, top_power)
        reports.append({"seed": ch.seed, **rep.to_dict()})
    return {
        "csv": buf.getvalue(),
        "dof": dof,
        "estimate": overall,
        "channels": [ch.to_dict() for ch in channels],
        "reports": reports,
        **extra,
    }


def cmd_simulate(args) -> int:
    cfg = build_config(args)
    result = simulate(cfg)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "rates.csv").write_text(result["csv"])
        (out / "dof.json").write_text(_dump_json(result["dof"]))
        (out / "channels.json").write_text(_dump_json(result["channels"]))
        (out / "reports.json").write_text(_dump_json(result["reports"]))
        if "beamformers" in result:
            (out / "beamformers.json").write_text(_dump_json(result["beamformers"]))
    else:
        sys.stdout.write(result["csv"])
    est = result["estimate"]
    slopes = " ".join(f"{s:.4f}" for s in est.slopes)
    print(f"scheme={cfg.scheme} slope={est.total:.4f} per-user=[{slopes}] r2={est.r2:.6f}")
    return EXIT_OK


# ----------------------------------------------------------------------
# verify

def feasibility_table() -> list[dict]:
    return [beamform.feasibility_count(n, side) for n in (1, 2, 3) for side in (True, False)]


def print_feasibility() -> None:
    print(f"{'n':>2} {'side':>5} {'params':>6} {'constraints':>11} feasible")
    for row in feasibility_table():
        print(f"{row['n_antennas']:>2} {str(row['include_side_scalars']):>5} {row['parameters']:>6} "
              f"{row['constraints']:>11} {row['counting_feasible']}")


def nullspace_census(n_trials: int, seed: int, tol: float) -> dict[int, int]:
    """Histogram of nullspace dimensions of the 3-antenna nulling system."""
    dims: dict[int, int] = {}
    for s in np.random.SeedSequence(seed).generate_state(n_trials):
        ch = sample_channels(Topology.mimo(3), int(s))
        ns = beamform.nullspace(beamform.build_nulling_system(ch).matrix, tol)
        dims[ns.dim] = dims.get(ns.dim, 0) + 1
    return dims


def _check_channel_file(path: str, tol: float) -> list[tuple[str, bool]]:
    ch = ChannelRealization.from_json(Path(path).read_text())
    if ch.topology.is_mimo:
        try:
            sol = beamform.solve_v2(ch, 1.0, tol)
        except DegenerateChannelError as exc:
            return [(f"mimo nulling: degenerate ({exc})", False)]
        return [(f"mimo nulling residual={max(sol.residuals):.3g}", True)]
    report = schemes.cache_delivery_gains(ch)
    bad = [d for d, g in report.gains.items() if abs(g) <= schemes.DEGENERATE_GAIN_TOL * ch.h_max]
    if bad:
        names = ", ".join(f"D{d}" for d in bad)
        return [(f"cache-gain degeneracy at {names}", False)]
    return [(f"cache gains nondegenerate (min |g|={min(abs(g) for g in report.gains.values()):.3g})", True)]


def cmd_verify(args) -> int:
    if args.feasibility:
        print_feasibility()
        return EXIT_OK
    cfg = build_config(args, slope_run=False, trials=1000, seed=0)
    if args.channels:
        results = _check_channel_file(args.channels, cfg.tol_rank)
        for label, ok in results:
            print(f"{label}: {'PASS' if ok else 'FAIL'}")
        return EXIT_OK if all(ok for _, ok in results) else EXIT_DEGENERATE
    checks = []
    for scheme in ("cache", "mimo"):
        r = analysis.monte_carlo_residual(scheme, cfg.trials, cfg.seed)
        checks.append((f"{scheme} residual={r:.3g} <= {cfg.tol_residual:g}", r <= cfg.tol_residual))
    dims = nullspace_census(cfg.trials, cfg.seed, cfg.tol_rank)
    expected = beamform.GENERIC_NULLSPACE_DIM
    good = dims.get(expected, 0)
    checks.append((f"nullspace dim={expected} ({good}/{cfg.trials})", good == cfg.trials))
    ch = sample_channels(Topology.single(), cfg.seed)
    bound = analysis.genie_cutset_bound(analysis.butterfly_cut(), ch, cfg.tol_rank)
    checks.append((f"genie bound={bound.total}", bound.total == 2))
    for label, ok in checks:
        print(f"{label}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if all(ok for _, ok in checks) else EXIT_VERIFY


# ----------------------------------------------------------------------
# bound

def _split(text: str | None) -> list[str]:
    return [t for t in (text or "").split(",") if t.strip()]


def cmd_bound(args) -> int:
    topo = Topology.parse(args.topology or "single")
    seed = 7 if args.seed is None else args.seed
    ch = sample_channels(topo, seed)
    if args.left is not None or args.right is not None or args.bridge is not None:
        cut = analysis.GenieCut.of(_split(args.left), _split(args.right), _split(args.bridge))
    else:
        cut = analysis.butterfly_cut(topo)
    bound = analysis.genie_cutset_bound(cut, ch, args.tol_rank or beamform.RANK_TOL)
    print(f"topology={topo.label} left={sorted(cut.left)} right={sorted(cut.right)} bridge={sorted(cut.bridge)}")
    print(f"forward={bound.forward} reverse={bound.reverse} total={bound.total}")
    scheme = "no_cache" if not topo.is_mimo else ("mimo" if 1 in topo.relays else "mimo_no_side")
    if topo.n_antennas in (1, 3):
        cfg = SimulationConfig(scheme=scheme, topology=topo.label, seed=seed)
        est = simulate(cfg)["estimate"]
        print(f"measured {scheme} slope={est.total:.4f}")
    return EXIT_OK


def cmd_feasibility(args) -> int:
    print_feasibility()
    return EXIT_OK


# ----------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=PRESETS, help="reproduction recipe to start from")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--scheme", choices=analysis.SCHEMES)
    p.add_argument("--topology", help="single | mimo:N | mimo-only:N")
    p.add_argument("--pdb", type=parse_pdb, help="power grid in dB as start:stop:step")
    p.add_argument("--p", type=float, help="cached fraction for cache_partial")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int, help="number of channel realizations")
    p.add_argument("--out", help="output directory")
    p.add_argument("--tol-residual", dest="tol_residual", type=float)
    p.add_argument("--tol-rank", dest="tol_rank", type=float)
    p.add_argument("--tol-slope", dest="tol_slope", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="butterfly-dof",
                                     description="Two-way butterfly network DoF simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sweep a scheme over power and fit the DoF slope")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="cancellation, nullspace and cut-bound checks")
    _add_common(p)
    p.add_argument("--channels", help="check a single channel realization JSON file")
    p.add_argument("--feasibility", action="store_true", help="print the parameter-counting table")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bound", help="genie-aided cut bound")
    p.add_argument("--topology")
    p.add_argument("--seed", type=int)
    p.add_argument("--left", help="comma-separated nodes, e.g. S1,R1,S4")
    p.add_argument("--right")
    p.add_argument("--bridge")
    p.add_argument("--tol-rank", dest="tol_rank", type=float)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("feasibility", help="parameter-counting table for the nulling system")
    p.set_defaults(func=cmd_feasibility)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, InvalidCutError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateChannelError as exc:
        print(f"degenerate channel: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ButterflyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
