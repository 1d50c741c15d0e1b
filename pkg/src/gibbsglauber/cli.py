"""Command-line entry point: sampling runs, validation suites, localization
experiments, and throughput benchmarks, all reproducible from a single seed.

Subcommands: sample | canonical | validate | localize | bench. Configuration
comes from a TOML or JSON file (detected by extension) with flags overriding
individual fields. Numbers are serialized via Python's shortest round-trip
float representation, so a replay with the same config is byte-identical
except for wall-time fields. Worker count comes from GIBBSGLAUBER_THREADS
(default: all cores).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

from . import __version__
from .core import Configuration, Domain, HardSphere, SoftCore
from .dynamics import GlauberParams, plan_time, run_many, throughput
from .canonical import (
    CanonicalParams,
    InfeasibleSizeError,
    canonical_sample,
    estimate_mean_count,
    sweep_count,
)
from .oracle import (
    IntervalActivity,
    TonksModel,
    mc_partition,
    one_point_density,
    restricted_partition,
    tonks_mean_count,
    tonks_partition,
    tonks_pmf_vector,
)
from .localization import martingale_check, variance_conservation_check
from .validation import (
    CHI2_LEVEL,
    IdentityReport,
    SampleBatch,
    cardinality_ratio_check,
    domination_check,
    gnz_residual,
    influence_estimate,
    relaxation_time,
    survivor_check,
)

SUITES = (
    "gnz",
    "survivors",
    "domination",
    "ratio",
    "influence",
    "relaxation",
    "tonks",
    "martingale",
    "variance",
    "all",
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_EXHAUSTED = 3


class ConfigError(ValueError):
    pass


def load_config(path):
    if path is None:
        return {}
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    if path.endswith(".json"):
        with open(path) as fh:
            return json.load(fh)
    raise ConfigError(f"config {path!r} must end in .toml or .json")


def config_hash(cfg):
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, default=str).encode()
    ).hexdigest()[:16]


@dataclass
class RunConfig:
    """Resolved run configuration after merging file values and flags."""

    lengths: tuple
    potential: object
    activity: float
    horizon: float | None
    epsilon: float | None
    gamma: float | None
    chains: int
    seed: int
    out: str | None
    fmt: str
    initial: Configuration
    raw: dict = field(default_factory=dict)

    @property
    def domain(self):
        return Domain(self.lengths)

    def resolved_horizon(self):
        if self.horizon is not None:
            return self.horizon
        return plan_time(
            self.epsilon,
            len(self.initial),
            self.gamma,
            self.activity * self.domain.volume,
        )

    def glauber_params(self):
        return GlauberParams(
            domain=self.domain,
            potential=self.potential,
            activity=self.activity,
            horizon=self.resolved_horizon(),
            initial=self.initial,
            seed=self.seed,
        )


def _potential_from_config(cfg):
    spec = cfg.get("potential", {"kind": "hard_sphere", "radius": 0.15})
    kind = spec.get("kind", "hard_sphere")
    if kind == "hard_sphere":
        return HardSphere(float(spec["radius"]))
    if kind == "soft_core":
        return SoftCore(float(spec["strength"]), float(spec["range"]))
    raise ConfigError(f"unknown potential kind {kind!r}")


def _initial_from_config(cfg):
    src = cfg.get("initial")
    if not src:
        return Configuration()
    with open(src) as fh:
        data = json.load(fh)
    points = [tuple(p) for p in data["points"]]
    ids = data.get("ids", list(range(len(points))))
    return Configuration(ids, points)


def build_run_config(cfg, args):
    merged = dict(cfg)
    for key, attr in [
        ("seed", "seed"),
        ("chains", "chains"),
        ("out", "out"),
        ("format", "format"),
        ("gamma", "gamma"),
        ("epsilon", "epsilon"),
        ("horizon", "T"),
    ]:
        val = getattr(args, attr, None)
        if val is not None:
            merged[key] = val
    lengths = merged.get("lengths", [1.0])
    horizon = merged.get("horizon")
    epsilon = merged.get("epsilon")
    gamma = merged.get("gamma")
    if horizon is not None and (epsilon is not None or gamma is not None):
        raise ConfigError("give either a horizon or (epsilon, gamma), not both")
    if horizon is None and (epsilon is None or gamma is None):
        raise ConfigError("give either a horizon or both of epsilon and gamma")
    fmt = merged.get("format", "jsonl")
    if fmt not in ("jsonl", "csv"):
        raise ConfigError(f"unknown format {fmt!r}")
    return RunConfig(
        lengths=tuple(float(x) for x in lengths),
        potential=_potential_from_config(merged),
        activity=float(merged.get("activity", 1.0)),
        horizon=None if horizon is None else float(horizon),
        epsilon=None if epsilon is None else float(epsilon),
        gamma=None if gamma is None else float(gamma),
        chains=int(merged.get("chains", 1000)),
        seed=int(merged.get("seed", 0)),
        out=merged.get("out"),
        fmt=fmt,
        initial=_initial_from_config(merged),
        raw=merged,
    )


def _force_horizon(cfg, default):
    """Commands that schedule their own horizons ignore the planning fields."""
    cfg.pop("epsilon", None)
    cfg.pop("gamma", None)
    cfg.setdefault("horizon", default)


def _workers(args):
    if getattr(args, "workers", None):
        return args.workers
    return int(os.environ.get("GIBBSGLAUBER_THREADS", os.cpu_count() or 1))


def _provenance(cfg, seed):
    return {"config_hash": config_hash(cfg), "seed": seed, "version": __version__}


def _write_reports(reports, out, cfg, seed):
    prov = _provenance(cfg, seed)
    lines = []
    for rep in reports:
        rec = rep.to_dict()
        rec.update(prov)
        lines.append(json.dumps(rec, sort_keys=True))
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def cmd_sample(args):
    cfg = load_config(args.config)
    rc = build_run_config(cfg, args)
    params = rc.glauber_params()
    prov = _provenance(rc.raw, rc.seed)
    t0 = time.perf_counter()
    results = run_many(params, rc.chains, workers=_workers(args))
    wall = time.perf_counter() - t0
    total_events = sum(r.n_events for r in results)
    out = rc.out or "samples.jsonl"
    if rc.fmt == "csv":
        with open(out, "w") as fh:
            d = rc.domain.dimension
            fh.write("chain_index,id," + ",".join(f"x{i}" for i in range(d)) + "\n")
            for r in results:
                for pid, pos in r.configuration:
                    fh.write(
                        f"{r.chain_index},{pid},"
                        + ",".join(repr(c) for c in pos)
                        + "\n"
                    )
    else:
        batch = SampleBatch(
            params=params,
            configurations=[r.configuration for r in results],
            n_attempted_births=[r.n_attempted_births for r in results],
            n_events=[r.n_events for r in results],
        )
        batch.save(
            out,
            extra_header=prov,
            summary={
                "wall_time_s": wall,
                "total_events": total_events,
                "events_per_second": total_events / wall if wall > 0 else math.inf,
            },
        )
    print(
        f"sample: wrote {rc.chains} chains to {out} "
        f"(T={params.horizon:.6g}, {total_events} events)"
    )
    return EXIT_OK


def cmd_canonical(args):
    cfg = load_config(args.config)
    # gamma here bounds the spectral gap of the sweep, not a horizon plan;
    # the sweep schedules its own horizons internally
    gamma = args.gamma if args.gamma is not None else float(cfg.get("gamma", 0.5))
    args.gamma = None
    _force_horizon(cfg, 0.0)
    rc = build_run_config(cfg, args)
    k = args.k if args.k is not None else int(cfg.get("k", 0))
    delta = float(cfg.get("delta", 0.1) if args.delta is None else args.delta)
    params = CanonicalParams(
        k=k,
        domain=rc.domain,
        potential=rc.potential,
        activity=rc.activity,
        delta=delta,
        gamma=gamma,
        seed=rc.seed,
    )
    mode = "certified" if args.certified else "heuristic"
    try:
        result = canonical_sample(params, mode=mode, workers=_workers(args))
    except InfeasibleSizeError as exc:
        print(f"canonical: infeasible: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rec = {
        "kind": "canonical",
        "mode": mode,
        "k": k,
        "m": result.m,
        "sweep_index": result.sweep_index,
        "n_draws": result.n_draws,
        "activity_scale": result.activity_scale,
        "succeeded": result.succeeded,
        "points": [list(p) for p in result.configuration.positions]
        if result.succeeded
        else None,
    }
    rec.update(_provenance(rc.raw, rc.seed))
    line = json.dumps(rec, sort_keys=True)
    if rc.out:
        with open(rc.out, "w") as fh:
            fh.write(line + "\n")
    print(line)
    return EXIT_OK if result.succeeded else EXIT_EXHAUSTED


def _tonks_suite(cfg):
    model = TonksModel(
        cfg.get("length", 1.0), cfg.get("sigma", 0.3), cfg.get("activity", 1.0)
    )
    reports = []
    pmf = tonks_pmf_vector(model)
    reports.append(
        IdentityReport(
            "tonks_pmf_normalization",
            float(pmf.sum()),
            1.0,
            0.0,
            0.0,
            abs(float(pmf.sum()) - 1.0) <= 1e-12,
        )
    )
    z = tonks_partition(model)
    bound = math.exp(model.activity * model.length)
    reports.append(
        IdentityReport("tonks_partition_bounds", z, bound, 0.0, 0.0, 1.0 <= z <= bound)
    )
    from scipy.integrate import quad

    breakpoints = sorted(
        {
            min(max(p, 0.0), model.length)
            for k in range(model.max_count() + 1)
            for p in (k * model.sigma, model.length - k * model.sigma)
        }
    )
    integral, _ = quad(
        lambda x: one_point_density(model, x),
        0.0,
        model.length,
        points=breakpoints,
        limit=200,
    )
    mean = tonks_mean_count(model)
    reports.append(
        IdentityReport(
            "tonks_intensity_integral",
            integral,
            mean,
            0.0,
            0.0,
            abs(integral - mean) <= 1e-8,
        )
    )
    act = IntervalActivity(
        (
            (0.0, 0.45 * model.length, model.activity),
            (0.55 * model.length, model.length, model.activity),
        ),
        model.sigma,
    )
    z_quad = restricted_partition(act, method="quadrature")
    z_mc, se = mc_partition(
        Domain((model.length,)),
        HardSphere(model.sigma / 2.0),
        model.activity,
        kmax=model.max_count(),
        n_mc=20000,
        seed=cfg.get("seed", 0),
    )
    z_full = restricted_partition(
        IntervalActivity(((0.0, model.length, model.activity),), model.sigma),
        method="quadrature",
    )
    reports.append(
        IdentityReport(
            "tonks_quadrature_vs_closed_form",
            z_full,
            z,
            0.0,
            0.0,
            abs(z_full - z) <= 1e-8 * z,
        )
    )
    zmc_z = (z_mc - z) / se if se > 0 else 0.0
    reports.append(
        IdentityReport(
            "tonks_mc_partition", z_mc, z, se, zmc_z, abs(zmc_z) <= 4.0,
            extra={"two_interval_quadrature": z_quad},
        )
    )
    return reports


def _batch_for(cfg, rc, workers):
    path = cfg.get("batch")
    if path:
        return SampleBatch.load(path)
    return SampleBatch.generate(rc.glauber_params(), rc.chains, workers=workers)


def cmd_validate(args):
    cfg = load_config(args.config)
    suite = args.suite or cfg.get("suite")
    if suite not in SUITES:
        print(f"validate: unknown suite {suite!r}; choose from {SUITES}", file=sys.stderr)
        return EXIT_USAGE
    workers = _workers(args)
    cfg.setdefault("chains", 20000)
    cfg.setdefault("horizon", 30.0)
    rc = build_run_config(cfg, args)
    reports = []
    want = lambda name: suite in (name, "all")

    if want("tonks"):
        reports.extend(_tonks_suite(cfg))
    needs_batch = any(map(want, ("gnz", "domination", "ratio")))
    if needs_batch:
        batch = _batch_for(cfg, rc, workers)
        if want("gnz"):
            reports.append(gnz_residual(batch, lambda pts, x: 1.0, name="gnz[F=1]"))
            kk = int(cfg.get("gnz_k", 2))
            reports.append(
                gnz_residual(
                    batch,
                    lambda pts, x, kk=kk: 1.0 if len(pts) == kk else 0.0,
                    name=f"gnz[F=1[n={kk}]]",
                )
            )
        if want("domination"):
            reports.append(domination_check(batch))
        if want("ratio"):
            reports.append(cardinality_ratio_check(batch, int(cfg.get("ratio_k", 2))))
    if want("survivors"):
        n_s = int(cfg.get("survivors", 10))
        spacing = float(cfg.get("survivor_spacing", 1.0))
        length = n_s * spacing
        dom = Domain((length,))
        init = Configuration(
            range(n_s), [((i + 0.5) * spacing,) for i in range(n_s)]
        )
        params = GlauberParams(
            domain=dom,
            potential=rc.potential,
            activity=rc.activity,
            horizon=0.0,
            initial=init,
            seed=rc.seed,
        )
        s = float(cfg.get("survival_time", math.log(10.0)))
        reports.append(
            survivor_check(params, s, int(cfg.get("survivor_chains", 5000)), workers=workers)
        )
    if want("influence"):
        params = rc.glauber_params()
        x = tuple(cfg.get("influence_x", [L / 2.0 for L in rc.lengths]))
        res = influence_estimate(
            x, lambda p: 1.0, params, int(cfg.get("influence_chains", 20000)), workers=workers
        )
        target = float(cfg.get("influence_target", res.estimate))
        z = (res.estimate - target) / res.stderr if res.stderr > 0 else 0.0
        reports.append(
            IdentityReport(
                "influence[f=1]", res.estimate, target, res.stderr, z, abs(z) <= 4.0
            )
        )
    if want("relaxation"):
        from .dynamics import run as run_one
        from .oracle import tonks_sample
        import numpy as np

        model = TonksModel(rc.lengths[0], rc.potential.interaction_range, rc.activity)
        n_traces = int(cfg.get("relaxation_traces", 16))
        horizon = float(cfg.get("relaxation_horizon", 200.0))
        traces = []
        for i in range(n_traces):
            rng = np.random.default_rng((rc.seed, i))
            pts = tonks_sample(model, rng)
            init = Configuration(range(len(pts)), [(p,) for p in pts])
            p = GlauberParams(
                domain=rc.domain,
                potential=rc.potential,
                activity=rc.activity,
                horizon=horizon,
                initial=init,
                seed=rc.seed + 31 * i,
            )
            traces.append(run_one(p, collect_trace=True).trace)
        res = relaxation_time(traces, dt=0.25, n_lags=24)
        bound = float(cfg.get("relaxation_bound", 2.0))
        reports.append(
            IdentityReport(
                "relaxation_time",
                res.tau,
                bound,
                res.stderr if res.stderr == res.stderr else 0.0,
                0.0,
                res.ok and res.tau <= bound + 4.0 * (res.stderr or 0.0),
                extra={"status": res.status},
            )
        )
    if want("martingale"):
        for k in (0, 1):
            reports.append(
                martingale_check(
                    rc.activity,
                    float(cfg.get("tau", math.log(2.0))),
                    k,
                    int(cfg.get("pinning_runs", 20000)),
                    rc.seed,
                    length=rc.lengths[0],
                    sigma=rc.potential.interaction_range,
                )
            )
    if want("variance"):
        reports.append(
            variance_conservation_check(
                rc.activity,
                float(cfg.get("lam1", rc.activity / 2.0)),
                int(cfg.get("variance_k", 1)),
                int(cfg.get("pinning_runs", 20000)),
                rc.seed,
                length=rc.lengths[0],
                sigma=rc.potential.interaction_range,
            )
        )
    _write_reports(reports, rc.out, cfg, rc.seed)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_localize(args):
    cfg = load_config(args.config)
    cfg.setdefault("horizon", 0.0)
    rc = build_run_config(cfg, args)
    lam0 = rc.activity
    sigma = rc.potential.interaction_range
    length = rc.lengths[0]
    tau = float(cfg.get("tau", math.log(2.0)))
    n_runs = int(cfg.get("pinning_runs", 20000))
    reports = []
    for k in (0, 1, 2):
        reports.append(
            martingale_check(lam0, tau, k, n_runs, rc.seed, length=length, sigma=sigma)
        )
    rep = variance_conservation_check(
        lam0,
        float(cfg.get("lam1", lam0 * math.exp(-tau))),
        int(cfg.get("variance_k", 1)),
        n_runs,
        rc.seed,
        length=length,
        sigma=sigma,
    )
    reports.append(rep)
    print(
        f"localize: theoretical constant {rep.extra['theoretical_constant']:.4f}, "
        f"observed ratio {rep.extra['observed_ratio']:.4f}"
    )
    _write_reports(reports, rc.out, cfg, rc.seed)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_bench(args):
    cfg = load_config(args.config)
    cfg.setdefault("horizon", 1.0)
    rc = build_run_config(cfg, args)
    lengths = cfg.get("bench_lengths", [10.0, 20.0, 40.0, 80.0])
    min_events = int(cfg.get("bench_events", 200000))
    rows = []
    for L in lengths:
        dom = Domain((float(L),) + rc.lengths[1:])
        horizon = min_events / (2.0 * rc.activity * dom.volume)
        params = GlauberParams(
            domain=dom,
            potential=rc.potential,
            activity=rc.activity,
            horizon=horizon,
            seed=rc.seed,
        )
        stats = throughput(params, min_events=min_events)
        rows.append({"L": L, **stats})
        print(
            f"bench: L={L:g} events/s={stats['events_per_second']:.0f} "
            f"({stats['events']} events in {stats['seconds']:.2f}s)"
        )
    rates = [r["events_per_second"] for r in rows]
    ratio = max(rates) / min(rates)
    summary = {"kind": "bench", "rows": rows, "max_over_min": ratio}
    summary.update(_provenance(cfg, rc.seed))
    line = json.dumps(summary, sort_keys=True)
    if rc.out:
        with open(rc.out, "w") as fh:
            fh.write(line + "\n")
    print(f"bench: max/min events-per-second ratio {ratio:.3f}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gibbsglauber",
        description="Birth-death sampler and validation suites for repulsive point processes",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML or JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--chains", type=int)
        p.add_argument("--out", help="output path")
        p.add_argument("--format", choices=["jsonl", "csv"])
        p.add_argument("--gamma", type=float, help="spectral-gap lower bound")
        p.add_argument("--epsilon", type=float, help="TV tolerance (with --gamma)")
        p.add_argument("--T", type=float, help="explicit horizon")
        p.add_argument("--workers", type=int, help="overrides GIBBSGLAUBER_THREADS")

    p = sub.add_parser("sample", help="run independent chains, write a sample batch")
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("canonical", help="sample a configuration of exactly k points")
    common(p)
    p.add_argument("--k", type=int)
    p.add_argument("--delta", type=float, help="TV tolerance of the sweep")
    p.add_argument("--certified", action="store_true", help="full sweep schedule")
    p.set_defaults(func=cmd_canonical)

    p = sub.add_parser("validate", help="statistical identity checks")
    common(p)
    p.add_argument("--suite", choices=SUITES)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("localize", help="pinning-process checks (1D hard rods)")
    common(p)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("bench", help="events-per-second across domain sizes")
    common(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
