"""Statistical checks of the exact identities the sampler must satisfy.

Every check consumes a batch of independent final configurations (or event
traces) and produces an IdentityReport with a z-score against an exact target.
Thresholds are fixed module constants: |z| <= 4 for two-sided checks,
chi-squared level 1e-3 for goodness-of-fit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .core import Configuration, Domain, HardSphere, SoftCore, delta_energy_brute
from .dynamics import GlauberParams, run_many

__all__ = [
    "Z_THRESHOLD",
    "CHI2_LEVEL",
    "SampleBatch",
    "IdentityReport",
    "gnz_residual",
    "cardinality_ratio_check",
    "survivor_check",
    "domination_check",
    "influence_estimate",
    "InfluenceResult",
    "relaxation_time",
    "RelaxationResult",
    "chi2_gof",
]

Z_THRESHOLD = 4.0
CHI2_LEVEL = 1e-3


@dataclass
class IdentityReport:
    test: str
    estimate: float
    target: float
    stderr: float
    z: float
    passed: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "test": self.test,
            "estimate": self.estimate,
            "target": self.target,
            "stderr": self.stderr,
            "z": self.z,
            "pass": bool(self.passed),
        }
        out.update(self.extra)
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _potential_to_dict(potential):
    if isinstance(potential, HardSphere):
        return {"kind": "hard_sphere", "radius": potential.radius}
    if isinstance(potential, SoftCore):
        return {"kind": "soft_core", "strength": potential.strength, "range": potential.range}
    raise TypeError(f"unknown potential {potential!r}")


def potential_from_dict(d):
    if d["kind"] == "hard_sphere":
        return HardSphere(d["radius"])
    if d["kind"] == "soft_core":
        return SoftCore(d["strength"], d["range"])
    raise ValueError(f"unknown potential kind {d['kind']!r}")


@dataclass
class SampleBatch:
    """Final configurations of independent chains plus generation metadata."""

    params: GlauberParams
    configurations: list
    n_attempted_births: list
    n_events: list

    @classmethod
    def generate(cls, params, n_chains, workers=1):
        results = run_many(params, n_chains, workers=workers)
        return cls(
            params=params,
            configurations=[r.configuration for r in results],
            n_attempted_births=[r.n_attempted_births for r in results],
            n_events=[r.n_events for r in results],
        )

    def __len__(self):
        return len(self.configurations)

    def counts(self):
        return np.array([len(c) for c in self.configurations])

    def total_activity(self):
        return self.params.total_activity()

    def save(self, path, extra_header=None, summary=None):
        p = self.params
        with open(path, "w") as fh:
            header = {
                "kind": "header",
                "seed": p.seed,
                "activity": p.activity,
                "horizon": p.horizon,
                "lengths": list(p.domain.lengths),
                "potential": _potential_to_dict(p.potential),
                "n_chains": len(self.configurations),
                "initial": [list(x) for x in p.initial.positions],
                "initial_ids": list(p.initial.ids),
                "pinned": [list(x) for x in p.pinned.positions],
                "pinned_ids": list(p.pinned.ids),
            }
            if extra_header:
                header.update(extra_header)
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for i, config in enumerate(self.configurations):
                rec = {
                    "kind": "chain",
                    "chain_index": i,
                    "seed": p.seed,
                    "T": p.horizon,
                    "points": [list(x) for x in config.positions],
                    "ids": list(config.ids),
                    "n_events": self.n_events[i],
                    "n_attempted_births": self.n_attempted_births[i],
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            if summary is not None:
                fh.write(
                    json.dumps({"kind": "summary", **summary}, sort_keys=True) + "\n"
                )

    @classmethod
    def load(cls, path):
        header = None
        configs, births, events = [], [], []
        with open(path) as fh:
            for line in fh:
                rec = json.loads(line)
                kind = rec.get("kind")
                if kind == "header":
                    header = rec
                elif kind == "chain":
                    configs.append(
                        Configuration(rec["ids"], [tuple(x) for x in rec["points"]])
                    )
                    births.append(rec.get("n_attempted_births", 0))
                    events.append(rec.get("n_events", 0))
        if header is None:
            raise ValueError(f"{path}: no header record")
        params = GlauberParams(
            domain=Domain(tuple(header["lengths"])),
            potential=potential_from_dict(header["potential"]),
            activity=header["activity"],
            horizon=header["horizon"],
            initial=Configuration(
                header.get("initial_ids", []),
                [tuple(x) for x in header.get("initial", [])],
            ),
            seed=header["seed"],
            pinned=Configuration(
                header.get("pinned_ids", []),
                [tuple(x) for x in header.get("pinned", [])],
            ),
        )
        return cls(params, configs, births, events)


def chi2_gof(observed, probs, level=CHI2_LEVEL, min_expected=5.0):
    """Chi-squared goodness-of-fit with tail bins merged up to min_expected.

    observed: counts per category 0..len(probs)-1 (excess mass beyond the
    last category must already be folded into it). Returns (pvalue, passed).
    """
    observed = np.asarray(observed, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if observed.shape != probs.shape:
        raise ValueError("observed and probs must align")
    n = observed.sum()
    expected = probs * n
    obs_m, exp_m = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_m.append(acc_o)
            exp_m.append(acc_e)
            acc_o = acc_e = 0.0
    if obs_m:
        obs_m[-1] += acc_o
        exp_m[-1] += acc_e
    else:
        obs_m, exp_m = [acc_o], [acc_e]
    if len(obs_m) < 2:
        return 1.0, True
    obs_m = np.asarray(obs_m)
    exp_m = np.asarray(exp_m) * (obs_m.sum() / np.sum(exp_m))
    stat = float(np.sum((obs_m - exp_m) ** 2 / exp_m))
    pvalue = float(stats.chi2.sf(stat, df=len(obs_m) - 1))
    return pvalue, pvalue >= level


def gnz_residual(batch, F, n_x=16, seed=0, name="gnz", n_sigma=Z_THRESHOLD):
    """Two-sided test of the point-process balance identity.

    For each sampled configuration eta the sum of F(eta, x) over its points is
    compared with lam(domain) times the Monte Carlo average over uniform
    candidate locations of exp(-dH) * F(eta + candidate, candidate). The
    paired difference has mean zero exactly when the batch follows the target
    law.
    """
    p = batch.params
    if len(p.pinned):
        raise ValueError("gnz_residual expects an unpinned batch")
    lam_total = batch.total_activity()
    lengths = p.domain.lengths
    d = len(lengths)
    rng = np.random.default_rng(seed)
    n = len(batch.configurations)
    diffs = np.empty(n)
    for i, config in enumerate(batch.configurations):
        pts = config.positions
        lhs = 0.0
        for x in pts:
            val = F(pts, x)
            if not math.isfinite(val):
                raise ValueError("test functional must be bounded")
            lhs += val
        u = rng.random((n_x, d))
        acc = 0.0
        for j in range(n_x):
            cand = tuple(u[j, a] * lengths[a] for a in range(d))
            w = math.exp(-delta_energy_brute(pts, cand, p.potential))
            if w > 0.0:
                val = F(pts + (cand,), cand)
                if not math.isfinite(val):
                    raise ValueError("test functional must be bounded")
                acc += w * val
        diffs[i] = lhs - lam_total * acc / n_x
    est = float(np.mean(diffs))
    stderr = float(np.std(diffs, ddof=1)) / math.sqrt(n)
    z = est / stderr if stderr > 0 else 0.0
    return IdentityReport(
        test=name,
        estimate=est,
        target=0.0,
        stderr=stderr,
        z=z,
        passed=abs(z) <= n_sigma,
        extra={"n_samples": n, "n_x": n_x},
    )


def cardinality_ratio_check(batch, k, n_sigma=Z_THRESHOLD):
    """One-sided check that P(|eta|=k-1) / P(|eta|=k) >= k / lam(domain)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    counts = batch.counts()
    n = len(counts)
    p_lo = float(np.mean(counts == k - 1))
    p_hi = float(np.mean(counts == k))
    if p_lo == 0.0 or p_hi == 0.0:
        return IdentityReport(
            test=f"cardinality_ratio[k={k}]",
            estimate=math.nan,
            target=k / batch.total_activity(),
            stderr=math.nan,
            z=math.nan,
            passed=False,
            extra={"status": "inconclusive", "empty_bin": True},
        )
    ratio = p_lo / p_hi
    # delta method for a ratio of multinomial proportions
    var = ratio**2 * ((1 - p_lo) / (n * p_lo) + (1 - p_hi) / (n * p_hi) + 2.0 / n)
    stderr = math.sqrt(var)
    target = k / batch.total_activity()
    z = (ratio - target) / stderr
    return IdentityReport(
        test=f"cardinality_ratio[k={k}]",
        estimate=ratio,
        target=target,
        stderr=stderr,
        z=z,
        passed=ratio >= target - n_sigma * stderr,
        extra={"one_sided": True},
    )


def survivor_check(params, s, n_chains, workers=1, level=CHI2_LEVEL, n_sigma=Z_THRESHOLD):
    """Survival of initial particles: Binomial(|S|, e^-s) counts, independent marks.

    Runs n_chains to horizon s; each initial particle survives independently
    with probability e^-s regardless of the activity. Checks the count law by
    chi-squared and pairwise independence via correlations.
    """
    S = params.initial
    if len(S) == 0:
        raise ValueError("survivor_check needs a nonempty initial configuration")
    run_params = replace(params, horizon=float(s))
    results = run_many(run_params, n_chains, workers=workers)
    ids = list(S.ids)
    indicators = np.zeros((n_chains, len(ids)), dtype=bool)
    for i, r in enumerate(results):
        present = set(r.configuration.ids)
        for j, pid in enumerate(ids):
            indicators[i, j] = pid in present
    p_surv = math.exp(-s)
    counts = indicators.sum(axis=1)
    hist = np.bincount(counts, minlength=len(ids) + 1)
    probs = stats.binom.pmf(np.arange(len(ids) + 1), len(ids), p_surv)
    pvalue, gof_ok = chi2_gof(hist, probs, level=level)

    corr_ok = True
    max_corr = 0.0
    col = indicators.astype(float)
    std = col.std(axis=0)
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            if std[a] == 0 or std[b] == 0:
                continue
            rho = float(np.corrcoef(col[:, a], col[:, b])[0, 1])
            max_corr = max(max_corr, abs(rho))
            if abs(rho) > n_sigma / math.sqrt(n_chains):
                corr_ok = False
    est = float(np.mean(counts))
    target = len(ids) * p_surv
    stderr = float(np.std(counts, ddof=1)) / math.sqrt(n_chains)
    z = (est - target) / stderr if stderr > 0 else 0.0
    return IdentityReport(
        test=f"survivors[s={s:g}]",
        estimate=est,
        target=target,
        stderr=stderr,
        z=z,
        passed=gof_ok and corr_ok,
        extra={"chi2_pvalue": pvalue, "max_abs_corr": max_corr, "n_chains": n_chains},
    )


def domination_check(batch, n_sigma=Z_THRESHOLD):
    """Stochastic domination by the ideal gas at the same activity.

    The empirical cardinality CDF must sit above the Poisson CDF (up to the
    n_sigma binomial band pointwise) and the mean below lam(domain).
    """
    counts = batch.counts()
    n = len(counts)
    lam_total = batch.total_activity()
    kmax = int(counts.max()) if n else 0
    ecdf_ok = True
    min_margin = math.inf
    for k in range(kmax + 1):
        f_hat = float(np.mean(counts <= k))
        f_pois = float(stats.poisson.cdf(k, lam_total))
        band = n_sigma * math.sqrt(max(f_hat * (1 - f_hat), 1e-12) / n)
        margin = f_hat - f_pois + band
        min_margin = min(min_margin, f_hat - f_pois)
        if margin < 0:
            ecdf_ok = False
    mean = float(np.mean(counts))
    stderr = float(np.std(counts, ddof=1)) / math.sqrt(n)
    mean_ok = mean <= lam_total + n_sigma * stderr
    z = (mean - lam_total) / stderr if stderr > 0 else 0.0
    return IdentityReport(
        test="poisson_domination",
        estimate=mean,
        target=lam_total,
        stderr=stderr,
        z=z,
        passed=ecdf_ok and mean_ok,
        extra={"cdf_min_margin": min_margin, "one_sided": True},
    )


@dataclass
class InfluenceResult:
    estimate: float
    stderr: float
    pinned_mean: float
    plain_mean: float


def influence_estimate(x, f, params, n_chains, workers=1):
    """Change in the expected mark sum eta(f) caused by pinning a point at x.

    The pinned arm runs the dynamics with x held immortal (which realizes the
    reweighted activity) and counts x itself in eta(f); the plain arm uses the
    unmodified parameters with an independent seed.
    """
    x = tuple(float(c) for c in x)
    if not params.domain.contains(x):
        raise ValueError(f"pin {x} outside the domain")
    pinned_params = replace(
        params,
        pinned=Configuration([-1], [x]),
        seed=params.seed,
    )
    plain_params = replace(params, seed=params.seed + 1)

    def arm(p):
        results = run_many(p, n_chains, workers=workers)
        vals = np.array(
            [math.fsum(f(pt) for pt in r.configuration.positions) for r in results]
        )
        return float(np.mean(vals)), float(np.std(vals, ddof=1)) / math.sqrt(n_chains)

    pinned_mean, pinned_se = arm(pinned_params)
    plain_mean, plain_se = arm(plain_params)
    return InfluenceResult(
        estimate=pinned_mean - plain_mean,
        stderr=math.hypot(pinned_se, plain_se),
        pinned_mean=pinned_mean,
        plain_mean=plain_mean,
    )


@dataclass
class RelaxationResult:
    tau: float
    stderr: float
    status: str
    n_lags_used: int = 0

    @property
    def ok(self):
        return self.status == "ok"


def relaxation_time(traces, dt, n_lags, min_acf=0.1):
    """Exponential autocorrelation time of the cardinality observable.

    Averages per-trace autocorrelations of |eta_t| on a uniform grid and fits
    the log slope over lags where the correlation is still clearly positive;
    the jackknife over traces gives the quoted error. Traces must come from
    stationary starts.
    """
    series = [t.counts_on_grid(dt).astype(float) for t in traces]
    usable = [s for s in series if np.std(s) > 0]
    if not usable:
        return RelaxationResult(math.nan, math.nan, "degenerate")

    def acf_of(s):
        x = s - s.mean()
        denom = float(x @ x)
        return np.array(
            [float(x[: len(x) - l] @ x[l:]) / denom for l in range(1, n_lags + 1)]
        )

    acfs = np.array([acf_of(s) for s in usable])

    def fit(mat):
        mean_acf = mat.mean(axis=0)
        mask = mean_acf > min_acf
        k = int(np.argmin(mask)) if not mask.all() else n_lags
        if k < 2:
            return math.nan
        lags = dt * np.arange(1, k + 1)
        slope = np.polyfit(lags, np.log(mean_acf[:k]), 1)[0]
        if slope >= 0:
            return math.nan
        return -1.0 / slope

    tau = fit(acfs)
    if math.isnan(tau):
        return RelaxationResult(math.nan, math.nan, "nondecaying")
    m = len(usable)
    if m > 1:
        jack = np.array(
            [fit(np.delete(acfs, i, axis=0)) for i in range(m)]
        )
        jack = jack[~np.isnan(jack)]
        stderr = (
            math.sqrt((len(jack) - 1) / len(jack) * float(np.sum((jack - jack.mean()) ** 2)))
            if len(jack) > 1
            else math.nan
        )
    else:
        stderr = math.nan
    mean_acf = acfs.mean(axis=0)
    used = int(np.sum(mean_acf > min_acf))
    return RelaxationResult(tau, stderr, "ok", used)
