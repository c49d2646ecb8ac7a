"""Simulation data generator.

Twenty covariates: eight time-invariant, twelve time-varying (some
resampled at every observation time, some following monotone patterns,
one a per-subject linear function of interval start time).  Survival
times follow Weibull hazards with piecewise-constant covariate effects,
drawn by closed-form inversion of the cumulative hazard; censoring is
independent uniform with its upper bound calibrated to a target rate.

Truth records keep the full covariate path, so masking half the change
points (the partial-knowledge setting) never touches outcomes or true
curves.
"""
from __future__ import annotations

import gzip
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, replace
from functools import lru_cache

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .curves import SurvivalCurve
from .data import CovariateSpec, Schema, SubjectRecord
from .errors import CalibrationError, ConfigError

P_COVARIATES = 20
SCENARIOS = {
    "2TI+1TV": (1, 2, 5),
    "2TI+4TV": (1, 2, 3, 4, 5, 6),
}
RELATIONSHIPS = ("linear", "nonlinear", "interaction")
HAZARDS = ("PH", "nonPH")
SNR_FACTORS = {"high": 1.0, "low": 0.75}

# value ranges of the first six covariates, used for analytic theta bounds
_RANGES = {1: (0, 1), 2: (0, 1), 3: (0, 1), 4: (0, 1), 5: (1, 5), 6: (0, 2)}

_CATEGORICAL_LEVELS = {5: (1, 2, 3, 4, 5), 9: (1, 2, 3, 4, 5), 12: (0, 1, 2), 14: (1, 2, 3, 4, 5)}

# seed-derivation domains (spawn keys)
_DOM_SUBJECT = 1
_DOM_MASK = 2
# horizon/censoring pilots draw from fixed entropy: calibration depends on
# the model setup only, never on the dataset seed, and is cached per config
_PILOT_ENTROPY = 0x7C1D
_DOM_HORIZON = 101
_DOM_CENSOR = 102


def make_schema():
    covs = []
    for k in range(1, P_COVARIATES + 1):
        if k in _CATEGORICAL_LEVELS:
            covs.append(
                CovariateSpec(name=f"x{k}", kind="categorical", levels=_CATEGORICAL_LEVELS[k])
            )
        else:
            covs.append(CovariateSpec(name=f"x{k}", kind="numeric"))
    return Schema(tuple(covs))


@dataclass(frozen=True)
class Coefficients:
    """Relationship coefficients.  Shipped defaults are artifact choices;
    override any of them via config."""

    beta: tuple = ()  # (b0, b1..b6) linear
    phi: tuple = ()  # (phi1, phi2, phi3) nonlinear outer
    psi: tuple = ()  # (psi0, psi1..psi6) nonlinear log argument
    gamma: tuple = ()  # (g0, g1..g6) interaction branch for (A, B)
    alpha: tuple = ()  # (a0, a1..a6) interaction branch for (A, not B)
    eta: tuple = ()  # (e1, e2, e3, e4) interaction nonlinear branches


def _centered_intercept(slopes, active, offset=0.0):
    mid = sum(slopes[k] * (_RANGES[k][0] + _RANGES[k][1]) / 2.0 for k in active)
    return offset - mid


def default_coefficients(relationship, scenario, snr):
    """Concrete shipped coefficients, scaled by the SNR factor and centered
    over the scenario's active covariates."""
    f = SNR_FACTORS[snr]
    active = SCENARIOS[scenario]
    if relationship == "linear":
        slopes = {1: 0.8 * f, 2: 0.8 * f, 3: 0.6 * f, 4: 0.6 * f, 5: 0.4 * f, 6: 0.5 * f}
        b0 = _centered_intercept(slopes, active)
        return Coefficients(beta=(b0,) + tuple(slopes[k] for k in range(1, 7)))
    if relationship == "nonlinear":
        return Coefficients(
            phi=(0.6 * f, 0.5 * f, 0.08 * f),
            psi=(1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5),
        )
    slopes = {1: 0.5 * f, 2: 0.5 * f, 3: 0.35 * f, 4: 0.35 * f, 5: 0.25 * f, 6: 0.3 * f}
    return Coefficients(
        gamma=(_centered_intercept(slopes, active, offset=1.0 * f),)
        + tuple(slopes[k] for k in range(1, 7)),
        alpha=(_centered_intercept(slopes, active, offset=-1.0 * f),)
        + tuple(slopes[k] for k in range(1, 7)),
        eta=(0.6 * f, 0.5 * f, 0.6 * f, -0.5 * f),
    )


@dataclass(frozen=True)
class DgpConfig:
    n_subjects: int
    scenario: str = "2TI+4TV"
    relationship: str = "linear"
    hazard: str = "PH"
    snr: str = "low"
    censor_rate: float = 0.2
    m: int = 11
    shape: float = 2.0  # Weibull nu
    scale: float = 0.1  # Weibull lambda
    horizon: float = None  # None: calibrated so ~95% of events fall inside
    knowledge: str = "full"  # "full" | "half"
    seed: int = 0
    coefficients: Coefficients = None  # None: shipped defaults
    interaction_a: float = 0.5  # branch set A is {x4 <= interaction_a}
    interaction_b_levels: tuple = (1, 2)  # branch set B for x5


def config_hash(config: DgpConfig):
    blob = json.dumps(asdict(config), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def load_dgp_config(path):
    with open(path, "rb") as f:
        obj = tomllib.load(f)
    if "dgp" not in obj:
        raise ConfigError(f"{path}: missing [dgp] table")
    table = dict(obj["dgp"])
    coeff_table = table.pop("coefficients", None)
    try:
        config = DgpConfig(**table)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if coeff_table is not None:
        base = default_coefficients(config.relationship, config.scenario, config.snr)
        fields = {k: tuple(v) for k, v in coeff_table.items()}
        unknown = set(fields) - set(asdict(base))
        if unknown:
            raise ConfigError(f"{path}: unknown coefficient fields {sorted(unknown)}")
        config = replace(config, coefficients=replace(base, **fields))
    return config


def resolve_coefficients(config: DgpConfig):
    if config.coefficients is not None:
        return config.coefficients
    return default_coefficients(config.relationship, config.scenario, config.snr)


# ---------------------------------------------------------------------------
# The survival relationship theta(x)
# ---------------------------------------------------------------------------


def _masked(x6, active):
    return [x6[k - 1] if k in active else 0.0 for k in range(1, 7)]


def theta_value(relationship, coeffs, scenario, x_first6, *, a_thresh=0.5, b_levels=(1, 2)):
    """Evaluate the survival relationship at one covariate vector.

    ``x_first6`` carries the raw values of x1..x6; covariates outside the
    scenario's active set enter as 0.
    """
    active = SCENARIOS[scenario]
    x = _masked(x_first6, active)
    x1, x2, x3, x4, x5, x6 = x
    if relationship == "linear":
        b = coeffs.beta
        return b[0] + sum(b[k] * x[k - 1] for k in range(1, 7))
    if relationship == "nonlinear":
        phi, psi = coeffs.phi, coeffs.psi
        arg = psi[0] + sum(psi[k] * x[k - 1] for k in range(1, 7))
        return (
            phi[0] * math.cos(sum(x))
            + phi[1] * math.log(arg)
            + phi[2] * x1 * (2.0 * x2) ** (4.0 * x4)
        )
    in_a = x4 <= a_thresh
    in_b = x5 in b_levels
    e = coeffs.eta
    if in_a and in_b:
        g = coeffs.gamma
        return g[0] + sum(g[k] * x[k - 1] for k in range(1, 7))
    if in_a:
        a = coeffs.alpha
        return a[0] + sum(a[k] * x[k - 1] for k in range(1, 7))
    if in_b:
        return e[0] * (x1 * x2 - math.log(x3 + x4) - x6 / x5) + e[1]
    return e[2] * (math.cos(math.pi * (x1 + x5)) + math.sqrt(x2 + x6) - x3) + e[3]


# -- analytic range bounds (config validation) -------------------------------


def _linear_range(intercept, slopes, ranges):
    lo = intercept + sum(min(s * r[0], s * r[1]) for s, r in zip(slopes, ranges))
    hi = intercept + sum(max(s * r[0], s * r[1]) for s, r in zip(slopes, ranges))
    return lo, hi


def _scale_iv(c, iv):
    return (min(c * iv[0], c * iv[1]), max(c * iv[0], c * iv[1]))


def _active_ranges(active, overrides=None):
    out = []
    for k in range(1, 7):
        if k not in active:
            out.append((0.0, 0.0))
        elif overrides and k in overrides:
            out.append(overrides[k])
        else:
            out.append(_RANGES[k])
    return out


def theta_range(config: DgpConfig):
    """Conservative analytic bounds of theta over the covariate box."""
    coeffs = resolve_coefficients(config)
    active = SCENARIOS[config.scenario]
    rel = config.relationship
    if rel == "linear":
        return _linear_range(coeffs.beta[0], coeffs.beta[1:], _active_ranges(active))
    if rel == "nonlinear":
        r = _active_ranges(active)
        phi, psi = coeffs.phi, coeffs.psi
        alo, ahi = _linear_range(psi[0], psi[1:], r)
        if alo <= 0:
            raise ConfigError(
                f"nonlinear log argument can reach {alo:.3g} <= 0; adjust psi"
            )
        t1 = (-abs(phi[0]), abs(phi[0]))
        t2 = _scale_iv(phi[1], (math.log(alo), math.log(ahi)))
        base, expo = (2 * r[1][0], 2 * r[1][1]), (4 * r[3][0], 4 * r[3][1])
        corners = [
            (1.0 if b == 0 and e == 0 else b**e) for b in base for e in expo
        ]
        pw = (min(corners), max(corners))
        t3 = _scale_iv(phi[2], pw)
        if 1 in active and _RANGES[1][0] == 0:
            t3 = (min(t3[0], 0.0), max(t3[1], 0.0))
        return (t1[0] + t2[0] + t3[0], t1[1] + t2[1] + t3[1])
    # interaction: union over reachable branches
    a, b_levels = config.interaction_a, tuple(config.interaction_b_levels)
    x4_active = 4 in active
    b_all = set(_CATEGORICAL_LEVELS[5])
    not_b = sorted(b_all - set(b_levels))
    b_iv = (min(b_levels), max(b_levels))
    nb_iv = (min(not_b), max(not_b)) if not_b else None
    branches = []
    r_a = _active_ranges(active, overrides={4: (0.0, min(a, 1.0))} if x4_active else None)
    r_na = _active_ranges(active, overrides={4: (a, 1.0)})
    e = coeffs.eta
    # (A, B) and (A, not B): linear branches
    branches.append(_linear_range(coeffs.gamma[0], coeffs.gamma[1:], _with5(r_a, b_iv)))
    if nb_iv:
        branches.append(_linear_range(coeffs.alpha[0], coeffs.alpha[1:], _with5(r_a, nb_iv)))
    if x4_active:
        if a <= 0:
            raise ConfigError("interaction set A must have a positive threshold")
        # (not A, B): log(x3 + x4) needs x4 > a > 0
        r = _with5(r_na, b_iv)
        p1 = (r[0][0] * r[1][0], r[0][1] * r[1][1])
        arg = (r[2][0] + a, r[2][1] + 1.0)
        l2 = (math.log(arg[0]), math.log(arg[1]))
        d3 = (r[5][0] / b_iv[1], r[5][1] / b_iv[0])
        expr = (p1[0] - l2[1] - d3[1], p1[1] - l2[0] - d3[0])
        iv = _scale_iv(e[0], expr)
        branches.append((iv[0] + e[1], iv[1] + e[1]))
        # (not A, not B)
        if nb_iv:
            r = _with5(r_na, nb_iv)
            sq = (math.sqrt(r[1][0] + r[5][0]), math.sqrt(r[1][1] + r[5][1]))
            expr = (-1.0 + sq[0] - r[2][1], 1.0 + sq[1] - r[2][0])
            iv = _scale_iv(e[2], expr)
            branches.append((iv[0] + e[3], iv[1] + e[3]))
    return (min(b[0] for b in branches), max(b[1] for b in branches))


def _with5(ranges, x5_iv):
    out = list(ranges)
    out[4] = x5_iv if out[4] != (0.0, 0.0) else (0.0, 0.0)
    return out


def validate_config(config: DgpConfig):
    if config.n_subjects < 1:
        raise ConfigError("n_subjects must be positive")
    if config.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {config.scenario!r}")
    if config.relationship not in RELATIONSHIPS:
        raise ConfigError(f"unknown relationship {config.relationship!r}")
    if config.hazard not in HAZARDS:
        raise ConfigError(f"unknown hazard {config.hazard!r}")
    if config.snr not in SNR_FACTORS:
        raise ConfigError(f"unknown snr {config.snr!r}")
    if not 0 <= config.censor_rate < 1:
        raise ConfigError("censor rate must lie in [0, 1)")
    if config.m < 1:
        raise ConfigError("m must be at least 1")
    if config.shape <= 0 or config.scale <= 0:
        raise ConfigError("Weibull shape and scale must be positive")
    if config.knowledge not in ("full", "half"):
        raise ConfigError(f"unknown knowledge setting {config.knowledge!r}")
    if config.relationship == "interaction" and not config.interaction_b_levels:
        raise ConfigError("interaction set B must be nonempty")
    lo, hi = theta_range(config)
    if config.hazard == "nonPH" and (lo < -3.0 - 1e-9 or hi > 3.0 + 1e-9):
        raise ConfigError(
            f"theta range [{lo:.3g}, {hi:.3g}] exceeds [-3, 3] under the nonPH "
            "hazard; rescale the coefficients"
        )
    return config


# ---------------------------------------------------------------------------
# Covariate paths
# ---------------------------------------------------------------------------


def gen_covariate_path(config: DgpConfig, horizon, rng):
    """One subject's observation times and raw covariate matrix (m x 20).

    The draw order is fixed and is part of the dataset-reproducibility
    contract.
    """
    m = config.m
    if m > 1:
        interior = np.sort(rng.uniform(0.0, horizon, m - 1))
        times = np.concatenate(([0.0], interior))
    else:
        times = np.zeros(1)
    cols = {}
    # time-invariant
    cols[1] = np.full(m, float(rng.integers(0, 2)))
    cols[2] = np.full(m, rng.uniform())
    cols[7] = np.full(m, rng.uniform())
    cols[8] = np.full(m, rng.uniform(1.0, 2.0))
    cols[9] = np.full(m, float(rng.integers(1, 6)))
    cols[10] = np.full(m, rng.uniform())
    cols[11] = np.full(m, float(rng.integers(0, 2)))
    cols[12] = np.full(m, float(rng.integers(0, 3)))
    # resampled time-varying
    cols[3] = rng.integers(0, 2, m).astype(float)
    cols[4] = rng.uniform(size=m)
    cols[5] = rng.integers(1, 6, m).astype(float)
    cols[14] = rng.integers(1, 6, m).astype(float)
    cols[15] = rng.uniform(size=m)
    cols[17] = rng.uniform(size=m)
    cols[19] = rng.integers(0, 2, m).astype(float)
    # patterned time-varying
    x6 = np.empty(m)
    x6[0] = float(rng.integers(0, 3))
    if m > 1:
        ups = rng.integers(0, 2, m - 1)
        for j in range(1, m):
            x6[j] = min(2.0, x6[j - 1] + ups[j - 1])
    cols[6] = x6
    cols[13] = _one_jump_path(m, 0.0, 1.0, rng)
    lower = float(rng.integers(0, 2))
    cols[16] = _one_jump_path(m, lower, lower + 1.0, rng)
    cols[18] = _two_jump_path(m, rng)
    a20, b20 = rng.uniform(size=2)
    cols[20] = a20 + b20 * times
    X = np.column_stack([cols[k] for k in range(1, P_COVARIATES + 1)])
    return times, X


def _one_jump_path(m, low, high, rng):
    if m == 1:
        return np.full(1, low)
    jump = int(rng.integers(1, m))
    return np.where(np.arange(m) >= jump, high, low)


def _two_jump_path(m, rng):
    if m == 1:
        return np.zeros(1)
    if m == 2:
        return _one_jump_path(m, 0.0, 1.0, rng)
    j1, j2 = np.sort(rng.choice(np.arange(1, m), size=2, replace=False))
    out = np.zeros(m)
    out[j1:] = 1.0
    out[j2:] = 2.0
    return out


# ---------------------------------------------------------------------------
# Survival times (closed-form inversion of the piecewise cumulative hazard)
# ---------------------------------------------------------------------------


def _ph_segment(lam, nu, e_theta, a, b):
    return lam * e_theta * (b**nu - a**nu)


def _nonph_segment(lam, e_theta, a, b):
    return (lam * b) ** e_theta - (lam * a) ** e_theta


def cumulative_hazard(t, seg_times, thetas, hazard, lam, nu):
    """H(t) for a piecewise-constant covariate path; vectorized over t."""
    t = np.asarray(t, dtype=float)
    H = np.zeros_like(t)
    J = len(seg_times)
    for j in range(J):
        a = seg_times[j]
        b = seg_times[j + 1] if j + 1 < J else np.inf
        upper = np.clip(t, a, b)
        e = math.exp(thetas[j])
        if hazard == "PH":
            H += lam * e * (upper**nu - a**nu)
        else:
            H += (lam * upper) ** e - (lam * a) ** e
    return H


def draw_survival_time(seg_times, thetas, hazard, lam, nu, u):
    """Solve H(T) = -log(u), walking segments and inverting in closed form."""
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie strictly inside (0, 1)")
    target = -math.log(u)
    acc = 0.0
    J = len(seg_times)
    for j in range(J):
        a = seg_times[j]
        b = seg_times[j + 1] if j + 1 < J else math.inf
        e = math.exp(thetas[j])
        seg = (
            _ph_segment(lam, nu, e, a, b)
            if hazard == "PH"
            else _nonph_segment(lam, e, a, b)
        )
        if acc + seg >= target or j == J - 1:
            rem = target - acc
            if hazard == "PH":
                return (a**nu + rem / (lam * e)) ** (1.0 / nu)
            return ((lam * a) ** e + rem) ** (1.0 / e) / lam
        acc += seg
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class TruthRecord:
    """Per-subject ground truth: piecewise-Weibull survival curve and the
    latent draws behind the observed outcome."""

    subject_id: str
    seg_times: tuple
    thetas: tuple
    hazard: str
    lam: float
    nu: float
    event_time: float
    censor_time: float
    u: float

    @property
    def boundaries(self):
        return np.asarray(self.seg_times)

    def cum_hazard(self, t):
        return cumulative_hazard(t, self.seg_times, self.thetas, self.hazard, self.lam, self.nu)

    def survival(self, t):
        return np.exp(-self.cum_hazard(t))


# ---------------------------------------------------------------------------
# Censoring calibration and masking
# ---------------------------------------------------------------------------


def _pilot_event_times(config, horizon, rng, n_pilot, theta_of):
    out = np.empty(n_pilot)
    for i in range(n_pilot):
        times, X = gen_covariate_path(config, horizon, rng)
        thetas = [theta_of(row) for row in X[:, :6]]
        u = _unit_open(rng)
        out[i] = draw_survival_time(
            tuple(times), thetas, config.hazard, config.scale, config.shape, u
        )
    return out


def _unit_open(rng):
    while True:
        u = float(rng.uniform())
        if 0.0 < u < 1.0:
            return u


def _calibration_key(config: DgpConfig):
    # censoring/horizon pilots ignore dataset seed, size, and masking
    return replace(config, seed=0, n_subjects=1, knowledge="full")


def calibrate_censoring(config: DgpConfig, horizon, theta_of=None, n_pilot=10_000):
    """Upper bound of the Unif(0, c_max) censoring law hitting the target rate.

    Bisection on the expected censored fraction over a pilot sample of event
    times; rate 0 returns infinity (no censoring).  The pilot draws from
    fixed entropy, so the result is a pure function of the model setup.
    """
    if config.censor_rate == 0:
        return math.inf
    return _calibrate_censoring_cached(_calibration_key(config), float(horizon), n_pilot)


@lru_cache(maxsize=128)
def _calibrate_censoring_cached(config, horizon, n_pilot):
    rate = config.censor_rate
    if not 0 < rate < 1:
        raise CalibrationError(f"unreachable censoring target {rate}")
    theta_of = _theta_evaluator(config)
    rng = np.random.default_rng(np.random.SeedSequence(_PILOT_ENTROPY, spawn_key=(_DOM_CENSOR,)))
    T = _pilot_event_times(config, horizon, rng, n_pilot, theta_of)

    def frac(c):
        return float(np.mean(np.minimum(T / c, 1.0)))

    lo, hi = 1e-9, float(np.max(T)) * 1e6
    if not (frac(hi) <= rate <= frac(lo)):
        raise CalibrationError(f"censoring target {rate} outside reachable range")
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if frac(mid) > rate:
            lo = mid
        else:
            hi = mid
    c_max = math.sqrt(lo * hi)
    if abs(frac(c_max) - rate) > 0.01:
        raise CalibrationError(
            f"calibration landed at {frac(c_max):.4f} for target {rate}"
        )
    return c_max


def mask_changes(record: SubjectRecord, rng):
    """Keep the baseline and a uniform random half (rounded up) of the
    change points; dropped changes carry the previous value forward.

    Outcomes are untouched: masking alters only the observed path.
    """
    J = record.n_obs
    if J <= 1:
        return record
    keep_n = math.ceil((J - 1) / 2)
    kept = np.sort(rng.choice(np.arange(1, J), size=keep_n, replace=False))
    idx = np.concatenate(([0], kept))
    return SubjectRecord(
        subject_id=record.subject_id,
        obs_times=tuple(record.obs_times[i] for i in idx),
        covariates=tuple(record.covariates[i] for i in idx),
        end_time=record.end_time,
        event=record.event,
    )


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimulatedData:
    subjects: tuple
    schema: Schema
    truths: dict
    config: DgpConfig
    horizon: float
    c_max: float


def _theta_evaluator(config):
    coeffs = resolve_coefficients(config)

    def theta_of(x_first6):
        return theta_value(
            config.relationship,
            coeffs,
            config.scenario,
            x_first6,
            a_thresh=config.interaction_a,
            b_levels=tuple(config.interaction_b_levels),
        )

    return theta_of


def resolve_horizon(config: DgpConfig, theta_of=None, n_pilot=2_000):
    """Observation-window length: the 95% quantile of pilot event times drawn
    with baseline-frozen covariates.  Cached per model setup."""
    if config.horizon is not None:
        return float(config.horizon)
    return _resolve_horizon_cached(_calibration_key(config), n_pilot)


@lru_cache(maxsize=128)
def _resolve_horizon_cached(config, n_pilot):
    theta_of = _theta_evaluator(config)
    rng = np.random.default_rng(np.random.SeedSequence(_PILOT_ENTROPY, spawn_key=(_DOM_HORIZON,)))
    pilot_cfg = replace(config, m=1)
    T = _pilot_event_times(pilot_cfg, 1.0, rng, n_pilot, theta_of)
    return float(np.quantile(T, 0.95))


def _raw_row(schema, row):
    # path columns hold raw values already; categorical levels are ints
    return tuple(
        int(row[j]) if spec.kind == "categorical" else float(row[j])
        for j, spec in enumerate(schema.covariates)
    )


def generate(config: DgpConfig):
    """Generate a dataset: subject records, schema, and per-subject truth.

    Subjects are generated from per-subject derived seeds, so parallel
    generation equals serial generation; fixing the seed reproduces the
    dataset exactly.
    """
    validate_config(config)
    schema = make_schema()
    theta_of = _theta_evaluator(config)
    horizon = resolve_horizon(config)
    c_max = calibrate_censoring(config, horizon)
    subjects, truths = [], {}
    for i in range(config.n_subjects):
        rng = np.random.default_rng(
            np.random.SeedSequence(config.seed, spawn_key=(_DOM_SUBJECT, i))
        )
        sid = f"s{i:05d}"
        times, X = gen_covariate_path(config, horizon, rng)
        thetas = tuple(theta_of(row) for row in X[:, :6])
        u = _unit_open(rng)
        T = draw_survival_time(
            tuple(times), thetas, config.hazard, config.scale, config.shape, u
        )
        if math.isfinite(c_max):
            C = float(rng.uniform(0.0, c_max))
            while C <= 0.0:
                C = float(rng.uniform(0.0, c_max))
        else:
            C = math.inf
        end = min(T, C)
        event = T <= C
        keep = times < end
        record = SubjectRecord(
            subject_id=sid,
            obs_times=tuple(times[keep]),
            covariates=tuple(_raw_row(schema, row) for row in X[keep]),
            end_time=float(end),
            event=bool(event),
        )
        if config.knowledge == "half":
            mask_rng = np.random.default_rng(
                np.random.SeedSequence(config.seed, spawn_key=(_DOM_MASK, i))
            )
            record = mask_changes(record, mask_rng)
        subjects.append(record)
        truths[sid] = TruthRecord(
            subject_id=sid,
            seg_times=tuple(times),
            thetas=thetas,
            hazard=config.hazard,
            lam=config.scale,
            nu=config.shape,
            event_time=float(T),
            censor_time=float(C),
            u=u,
        )
    return SimulatedData(
        subjects=tuple(subjects),
        schema=schema,
        truths=truths,
        config=config,
        horizon=horizon,
        c_max=c_max,
    )


# ---------------------------------------------------------------------------
# Truth-file round trip (gzip JSON; deterministic bytes)
# ---------------------------------------------------------------------------


def save_truth(path, data: SimulatedData):
    obj = {
        "format": "tvsurv-truth",
        "version": 1,
        "config_hash": config_hash(data.config),
        "seed": data.config.seed,
        "hazard": data.config.hazard,
        "lam": data.config.scale,
        "nu": data.config.shape,
        "horizon": data.horizon,
        "c_max": data.c_max if math.isfinite(data.c_max) else None,
        "records": [
            {
                "id": t.subject_id,
                "seg_times": list(t.seg_times),
                "thetas": list(t.thetas),
                "event_time": t.event_time,
                "censor_time": t.censor_time if math.isfinite(t.censor_time) else None,
                "u": t.u,
            }
            for t in data.truths.values()
        ],
    }
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as raw:
        # fixed mtime and empty filename keep the bytes deterministic
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as f:
            f.write(blob)


def load_truth(path):
    with gzip.open(path, "rb") as f:
        obj = json.loads(f.read().decode())
    if obj.get("format") != "tvsurv-truth":
        raise ConfigError(f"{path}: not a truth file")
    truths = {}
    for rec in obj["records"]:
        truths[rec["id"]] = TruthRecord(
            subject_id=rec["id"],
            seg_times=tuple(rec["seg_times"]),
            thetas=tuple(rec["thetas"]),
            hazard=obj["hazard"],
            lam=obj["lam"],
            nu=obj["nu"],
            event_time=rec["event_time"],
            censor_time=rec["censor_time"] if rec["censor_time"] is not None else math.inf,
            u=rec["u"],
        )
    return truths
