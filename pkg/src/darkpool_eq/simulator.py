"""Agent-based Monte Carlo market used as an oracle for the analytic layer.

Each replication draws the value, the liquidity demand and a finite
population of agents, routes every agent with the equilibrium cutoffs and
runs the venues mechanically: the market maker fills every exchange order
at the quoted spread, and the dark pool fills the short side and rations
the long side uniformly at random. Unexecuted liquidity orders move to the
exchange in period 2; unexecuted informed orders are cancelled.

Streams are Philox generators keyed by ``(seed, replication)``, so every
replication is reproducible on its own and the pool of replications can be
evaluated in any order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaincinv

from .metrics import closing_price, compute_metrics
from .model import ModelParams, Venue, informed_venue, uninformed_venue

_MASK64 = (1 << 64) - 1
MIN_AGENTS_VALIDATION = 100
MIN_REPLICATIONS = 30


@dataclass(frozen=True)
class SimulationConfig:
    agents_per_unit_mass: int = 1000
    replications: int = 200
    seed: int = 0
    antithetic: bool = False
    jobs: int = 1

    def __post_init__(self):
        if int(self.agents_per_unit_mass) < 1:
            raise ValueError("agents_per_unit_mass must be a positive integer")
        if int(self.replications) < 1:
            raise ValueError("replications must be a positive integer")
        if self.antithetic and self.replications % 2:
            raise ValueError("antithetic sampling needs an even number of replications")


# --------------------------------------------------------------------------
# One replication


@dataclass(frozen=True)
class _Strategy:
    s0: float
    s1: float
    d0: float
    d1: float
    spread_norm: float
    gamma_bar_e: float
    gamma_low_e: float
    alpha_e: float
    dual: bool


def _strategy(eq) -> _Strategy:
    if getattr(eq, "model", None) == "dual":
        return _Strategy(eq.s0_scaled, eq.s1_scaled, eq.d0, eq.d1, eq.spread_norm,
                         eq.gamma_bar_e, eq.gamma_low_e, eq.alpha_e, True)
    s, d = eq.s_hat_scaled, eq.spread_norm
    return _Strategy(s, s, d, d, eq.spread_norm, eq.gamma_bar_e, eq.gamma_low_e,
                     eq.alpha_e, False)


def _stream(seed: int, word: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & _MASK64, word & _MASK64]))


def _count(mass: float, n: int, u: float) -> int:
    # floor plus a Bernoulli agent for the fractional part keeps the mean exact
    x = mass * n
    k = math.floor(x)
    return int(k + (u < x - k))


RECORD_FIELDS = (
    "v", "z_plus", "z_minus", "n_informed", "n_liquidity",
    "inf_ex_right", "inf_ex_wrong", "inf_dark_right", "inf_dark_wrong", "inf_none",
    "liq_ex_buy", "liq_ex_sell", "liq_dark_buy", "liq_dark_sell", "liq_delay",
    "dark_exec_buy", "dark_exec_sell", "dark_exec_informed", "dark_exec_liquidity",
    "dark_right_placed", "dark_wrong_placed", "fill_right", "fill_wrong",
    "v_buy", "v_sell", "v_dark", "v_exchange", "r_approx", "llr_true", "p1", "profit",
    "balanced", "conserved",
)


def _replicate(strat: _Strategy, params: ModelParams, cfg: SimulationConfig, rep: int) -> tuple:
    n = int(cfg.agents_per_unit_mass)
    twin = cfg.antithetic and rep % 2 == 1
    base = rep // 2 if cfg.antithetic else rep
    g = _stream(cfg.seed, 2 * base)
    ration = _stream(cfg.seed, 2 * rep + 1)

    # scalar uniforms: value, two liquidity sides, fractional agents
    u = g.random(6)
    if twin:
        u = 1.0 - u
    v = 1.0 if u[0] < 0.5 else -1.0
    zl = params.z_law
    z_plus, z_minus = (gammaincinv(zl.shape, np.clip(u[1:3], 1e-300, 1 - 1e-16)) * zl.scale)
    n_inf = _count(params.mu, n, u[3])
    n_buy = _count(z_plus, n, u[4])
    n_sell = _count(z_minus, n, u[5])

    # informed traders: s_i = v + sigma_e eps_i, scaled by sigma_e
    eps = g.standard_normal(n_inf)
    if twin:
        eps = -eps
    s_scaled = v * params.sigma_ratio + eps
    venue_i = informed_venue(np.abs(s_scaled), strat.s0, strat.s1)
    right = np.sign(s_scaled) == v
    ex_i = venue_i == Venue.EXCHANGE
    dk_i = venue_i == Venue.DARK
    inf_ex_right = int(np.sum(ex_i & right))
    inf_ex_wrong = int(np.sum(ex_i & ~right))
    inf_dk_right = int(np.sum(dk_i & right))
    inf_dk_wrong = int(np.sum(dk_i & ~right))
    inf_none = n_inf - inf_ex_right - inf_ex_wrong - inf_dk_right - inf_dk_wrong

    # liquidity traders: delay costs d ~ G
    ud = g.random(n_buy + n_sell)
    if twin:
        ud = 1.0 - ud
    venue_l = uninformed_venue(params.delay_cdf.ppf(ud), strat.d0, strat.d1)
    vb, vs = venue_l[:n_buy], venue_l[n_buy:]
    liq_ex_buy = int(np.sum(vb == Venue.EXCHANGE))
    liq_ex_sell = int(np.sum(vs == Venue.EXCHANGE))
    liq_dk_buy = int(np.sum(vb == Venue.DARK))
    liq_dk_sell = int(np.sum(vs == Venue.DARK))
    liq_delay = n_buy + n_sell - liq_ex_buy - liq_ex_sell - liq_dk_buy - liq_dk_sell

    # dark pool: the short side fills, the long side is rationed at random
    inf_dk_buy, inf_dk_sell = (inf_dk_right, inf_dk_wrong) if v > 0 else (inf_dk_wrong, inf_dk_right)
    buy_total = inf_dk_buy + liq_dk_buy
    sell_total = inf_dk_sell + liq_dk_sell
    k = min(buy_total, sell_total)
    if buy_total > sell_total:
        ex_inf_buy = int(ration.hypergeometric(inf_dk_buy, liq_dk_buy, k)) if k else 0
        ex_inf_sell = inf_dk_sell
    elif sell_total > buy_total:
        ex_inf_buy = inf_dk_buy
        ex_inf_sell = int(ration.hypergeometric(inf_dk_sell, liq_dk_sell, k)) if k else 0
    else:
        ex_inf_buy, ex_inf_sell = inf_dk_buy, inf_dk_sell
    ex_liq_buy = k - ex_inf_buy
    ex_liq_sell = k - ex_inf_sell
    right_placed, wrong_placed = (buy_total, sell_total) if v > 0 else (sell_total, buy_total)
    fill_right = min(1.0, wrong_placed / right_placed) if right_placed else 1.0
    fill_wrong = min(1.0, right_placed / wrong_placed) if wrong_placed else 1.0

    # period-1 exchange flow seen by the market maker
    inf_ex_buy, inf_ex_sell = (inf_ex_right, inf_ex_wrong) if v > 0 else (inf_ex_wrong, inf_ex_right)
    v_buy = (inf_ex_buy + liq_ex_buy) / n
    v_sell = (inf_ex_sell + liq_ex_sell) / n
    sz2 = zl.sigma_z ** 2
    if strat.alpha_e > 0:
        r_approx = (2.0 * (strat.gamma_bar_e - strat.gamma_low_e) * params.mu
                    / (strat.alpha_e ** 2 * sz2) * (v_buy - v_sell))
    else:
        r_approx = 0.0
    a = strat.spread_norm * params.sigma_v
    vv = v * params.sigma_v
    profit = a * (v_buy + v_sell) - vv * (v_buy - v_sell)

    unexec_liq = liq_dk_buy + liq_dk_sell - ex_liq_buy - ex_liq_sell
    v_dark = 2.0 * k / n
    v_exchange = v_buy + v_sell + (liq_delay + unexec_liq) / n

    conserved = (
        inf_ex_right + inf_ex_wrong + (ex_inf_buy + ex_inf_sell)
        + (inf_dk_buy + inf_dk_sell - ex_inf_buy - ex_inf_sell) + inf_none == n_inf
        and liq_ex_buy + liq_ex_sell + (ex_liq_buy + ex_liq_sell) + unexec_liq + liq_delay
        == n_buy + n_sell
    )
    return (
        v, z_plus, z_minus, n_inf, n_buy + n_sell,
        inf_ex_right, inf_ex_wrong, inf_dk_right, inf_dk_wrong, inf_none,
        liq_ex_buy, liq_ex_sell, liq_dk_buy, liq_dk_sell, liq_delay,
        ex_inf_buy + ex_liq_buy, ex_inf_sell + ex_liq_sell, ex_inf_buy + ex_inf_sell,
        ex_liq_buy + ex_liq_sell, right_placed / n, wrong_placed / n, fill_right, fill_wrong,
        v_buy, v_sell, v_dark, v_exchange, r_approx, v * r_approx,
        float(closing_price(r_approx, params.sigma_v)), profit,
        float(ex_inf_buy + ex_liq_buy == ex_inf_sell + ex_liq_sell), float(conserved),
    )


def _run_chunk(args):
    strat, params, cfg, reps = args
    return [_replicate(strat, params, cfg, r) for r in reps]


# --------------------------------------------------------------------------
# Pooled outcome


@dataclass
class SimulationOutcome:
    """Per-replication records plus pooled means and standard errors.

    ``records`` maps every name in ``RECORD_FIELDS`` to an array ordered by
    replication index. Standard errors treat antithetic pairs as one
    observation.
    """

    config: SimulationConfig
    model: str
    records: dict
    means: dict = field(default_factory=dict)
    std_errors: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, x in self.records.items():
            self.means[k] = float(np.mean(x))
            self.std_errors[k] = _std_error(x, self.config.antithetic)

    @property
    def replications(self) -> int:
        return len(self.records["v"])

    def fraction(self, name: str, of: str) -> np.ndarray:
        return self.records[name] / self.records[of]

    def to_json(self) -> str:
        doc = {
            "config": asdict(self.config),
            "model": self.model,
            "replications": self.replications,
            "means": self.means,
            "std_errors": self.std_errors,
        }
        return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True)

    def records_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("replication",) + RECORD_FIELDS)
        for i in range(self.replications):
            w.writerow([i] + [repr(float(self.records[k][i])) for k in RECORD_FIELDS])
        return buf.getvalue()


def _std_error(x, paired: bool = False) -> float:
    x = np.asarray(x, dtype=float)
    if paired:
        x = 0.5 * (x[0::2] + x[1::2])
    if x.size < 2:
        return math.nan
    return float(np.std(x, ddof=1) / math.sqrt(x.size))


def simulate(eq, params: ModelParams, cfg: SimulationConfig | None = None) -> SimulationOutcome:
    """Run ``cfg.replications`` independent market draws under ``eq``'s
    strategies. Empty venues are legal and give zero counts."""
    cfg = cfg or SimulationConfig()
    strat = _strategy(eq)
    reps = list(range(int(cfg.replications)))
    if cfg.jobs > 1 and len(reps) > 1:
        chunks = [reps[i::cfg.jobs] for i in range(cfg.jobs)]
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            parts = list(ex.map(_run_chunk, [(strat, params, cfg, c) for c in chunks]))
        rows = [None] * len(reps)
        for c, part in zip(chunks, parts):
            for r, rec in zip(c, part):
                rows[r] = rec
    else:
        rows = _run_chunk((strat, params, cfg, reps))
    arr = np.array(rows, dtype=float)
    records = {k: arr[:, i] for i, k in enumerate(RECORD_FIELDS)}
    return SimulationOutcome(cfg, "dual" if strat.dual else "benchmark", records)


# --------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    zscores: dict
    analytic: dict
    empirical: dict
    std_errors: dict
    z_max: float
    passed: bool
    flags: list = field(default_factory=list)

    @property
    def worst(self) -> tuple:
        k = max(self.zscores, key=lambda n: abs(self.zscores[n]))
        return k, self.zscores[k]

    def summary(self) -> str:
        lines = [f"{'quantity':<22}{'analytic':>14}{'empirical':>14}{'std err':>12}{'z':>8}"]
        for k, z in self.zscores.items():
            lines.append(f"{k:<22}{self.analytic[k]:>14.6g}{self.empirical[k]:>14.6g}"
                         f"{self.std_errors[k]:>12.3g}{z:>8.2f}")
        lines.append(f"passed: {self.passed}" + (f"  flags: {', '.join(self.flags)}"
                                                 if self.flags else ""))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return asdict(self)


def _z(emp: float, ana: float, se: float) -> float:
    d = emp - ana
    if se > 0 and math.isfinite(se):
        return d / se
    return 0.0 if abs(d) <= 1e-12 else math.copysign(math.inf, d)


def _ratio_estimate(xs, paired: bool):
    """Delta-method standard error of ``f(means)`` for the predictive
    fraction ``fr b / (fr b + fw w)``."""
    fr, fw, b, w = (np.asarray(x, dtype=float) for x in xs)
    if paired:
        fr, fw, b, w = (0.5 * (x[0::2] + x[1::2]) for x in (fr, fw, b, w))
    m = np.array([fr.mean(), fw.mean(), b.mean(), w.mean()])
    num, den = m[0] * m[2], m[0] * m[2] + m[1] * m[3]
    val = num / den
    grad = np.array([
        m[2] * m[1] * m[3], -m[3] * num, m[0] * m[1] * m[3], -m[1] * num,
    ]) / den ** 2
    cov = np.cov(np.vstack([fr, fw, b, w])) / fr.size
    return float(val), float(math.sqrt(max(grad @ cov @ grad, 0.0)))


def validate(outcome: SimulationOutcome, eq, params: ModelParams,
             tolerances: dict | None = None) -> ValidationReport:
    """z-scores of empirical against analytic quantities.

    ``tolerances`` may set ``z_max`` (default 4) and ``profit_z_max``
    (default 3). Runs with fewer than 100 agents per unit mass or fewer
    than 30 replications are flagged and fail: discretization and sampling
    noise dominate there.
    """
    tol = {"z_max": 4.0, "profit_z_max": 3.0}
    tol.update(tolerances or {})
    rec, paired = outcome.records, outcome.config.antithetic
    mt = compute_metrics(eq, params)
    ana, emp, se = {}, {}, {}

    def add(name, a, x):
        ana[name] = float(a)
        emp[name] = float(np.mean(x))
        se[name] = _std_error(x, paired)

    n_inf, n_liq = rec["n_informed"], rec["n_liquidity"]
    add("gamma_bar_e", eq.gamma_bar_e, rec["inf_ex_right"] / n_inf)
    add("gamma_low_e", eq.gamma_low_e, rec["inf_ex_wrong"] / n_inf)
    add("alpha_e", eq.alpha_e, (rec["liq_ex_buy"] + rec["liq_ex_sell"]) / n_liq)
    dual = getattr(eq, "model", None) == "dual"
    if dual:
        add("gamma_bar_d", eq.gamma_bar_d, rec["inf_dark_right"] / n_inf)
        add("gamma_low_d", eq.gamma_low_d, rec["inf_dark_wrong"] / n_inf)
        add("alpha_d", eq.alpha_d, (rec["liq_dark_buy"] + rec["liq_dark_sell"]) / n_liq)
        add("r_bar", eq.r_bar, rec["fill_wrong"])
        add("r_low", eq.r_low, rec["fill_right"])
        add("v_dark", mt.v_dark, rec["v_dark"])
        pf, pf_se = _ratio_estimate((rec["fill_right"], rec["fill_wrong"],
                                     rec["dark_right_placed"], rec["dark_wrong_placed"]), paired)
        ana["predictive_fraction"], emp["predictive_fraction"] = mt.predictive_fraction, pf
        se["predictive_fraction"] = pf_se
    add("v_exchange", mt.v_exchange, rec["v_exchange"])
    i2 = mt.signal_to_noise ** 2
    add("r_approx_mean", 2.0 * i2, rec["llr_true"])
    x = rec["llr_true"]
    if paired:
        x = x[0::2]
    var = float(np.var(x, ddof=1))
    m4 = float(np.mean((x - x.mean()) ** 4))
    ana["r_approx_var"], emp["r_approx_var"] = 4.0 * i2, var
    se["r_approx_var"] = math.sqrt(max(m4 - var * var, 0.0) / x.size)
    add("mm_profit", 0.0, rec["profit"])

    # a rate that never moved (e.g. a side that is never rationed) has a
    # zero sample spread; use the largest spread a [0, 1] mean can have
    n_obs = rec["v"].size // (2 if paired else 1)
    for k in ("r_bar", "r_low", "gamma_bar_e", "gamma_low_e", "gamma_bar_d",
              "gamma_low_d", "alpha_e", "alpha_d"):
        if k in se and se[k] == 0.0 and 0.0 < ana[k] < 1.0:
            se[k] = math.sqrt(ana[k] * (1.0 - ana[k]) / n_obs)
    z = {k: _z(emp[k], ana[k], se[k]) for k in ana}
    flags = []
    if outcome.config.agents_per_unit_mass < MIN_AGENTS_VALIDATION:
        flags.append(f"high-variance: {outcome.config.agents_per_unit_mass} agents per unit "
                     f"mass is below {MIN_AGENTS_VALIDATION}")
    if outcome.replications < MIN_REPLICATIONS:
        flags.append(f"too-few-replications: {outcome.replications} < {MIN_REPLICATIONS}")
    if not np.all(rec["balanced"] == 1.0):
        flags.append("dark-pool-imbalance")
    if not np.all(rec["conserved"] == 1.0):
        flags.append("agent-conservation")
    ok = all(abs(v) <= tol["z_max"] for k, v in z.items() if k != "mm_profit")
    ok = ok and abs(z["mm_profit"]) <= tol["profit_z_max"] and not flags
    return ValidationReport(z, ana, emp, se, tol["z_max"], ok, flags)
