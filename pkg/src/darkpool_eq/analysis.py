"""Comparative statics, cross-model comparison and the price-discovery
threshold."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .benchmark import limit_khat, solve_benchmark
from .dualvenue import dual_limits_large_sigma, solve_dual
from .metrics import MetricsReport, compute_metrics
from .model import ModelError, ModelParams

AXES = ("sigma_e_log", "sigma_v_log", "sigma_ratio_log", "mu_ratio")
MODELS = ("benchmark", "dual")

CSV_COLUMNS = (
    "axis", "sigma_v", "sigma_e", "model", "s0", "s1", "s_hat", "spread_norm",
    "r_bar", "r_low", "gamma_bar_e", "gamma_low_e", "gamma_bar_d", "gamma_low_d",
    "alpha_e", "alpha_d", "snr", "rmse", "v_dark", "v_exchange", "v_total",
    "dark_share", "predictive_fraction", "residual_max", "flags",
)


# --------------------------------------------------------------------------
# Sweeps


@dataclass(frozen=True)
class SweepSpec:
    """Grid over one axis. Log axes hold natural logarithms; ``mu_ratio``
    holds ``mu / mu_z``."""

    axis: str
    grid: tuple
    base_params: ModelParams
    models: tuple = MODELS

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown axis {self.axis!r}; expected one of {AXES}")
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1 or g.size == 0 or not np.all(np.isfinite(g)):
            raise ValueError("grid must be a nonempty list of finite numbers")
        d = np.diff(g)
        if not (np.all(d >= 0) or np.all(d <= 0)):
            raise ValueError("grid must be monotone")
        bad = set(self.models) - set(MODELS)
        if bad or not self.models:
            raise ValueError(f"models must be a nonempty subset of {MODELS}")
        object.__setattr__(self, "grid", tuple(float(v) for v in g))
        object.__setattr__(self, "models", tuple(m for m in MODELS if m in self.models))


def params_at(axis: str, value: float, base: ModelParams) -> ModelParams:
    """Parameters at one grid value of ``axis``."""
    if axis == "sigma_e_log":
        return base.with_sigmas(base.sigma_v, math.exp(value))
    if axis == "sigma_v_log":
        return base.with_sigmas(math.exp(value), base.sigma_e)
    if axis == "sigma_ratio_log":
        return base.with_sigmas(math.exp(value) * base.sigma_e, base.sigma_e)
    if axis == "mu_ratio":
        return base.with_mu_ratio(value)
    raise ValueError(f"unknown axis {axis!r}")


@dataclass
class SweepPoint:
    value: float
    params: ModelParams
    benchmark: object = None
    dual: object = None
    metrics: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    @property
    def deltas(self) -> dict:
        """Dual minus benchmark for the headline measures."""
        if self.benchmark is None or self.dual is None:
            return {}
        mb, md = self.metrics["benchmark"], self.metrics["dual"]
        return {
            "spread_norm": self.dual.spread_norm - self.benchmark.spread_norm,
            "alpha_e": self.dual.alpha_e - self.benchmark.alpha_e,
            "informed_gap_e": ((self.dual.gamma_bar_e - self.dual.gamma_low_e)
                               - (self.benchmark.gamma_bar_e - self.benchmark.gamma_low_e)),
            "snr": md.signal_to_noise - mb.signal_to_noise,
            "rmse": md.rmse - mb.rmse,
        }


def solve_point(axis: str, value: float, base: ModelParams, models=MODELS) -> SweepPoint:
    """Solve every requested model at one grid value of ``axis``; failures
    are kept as error records."""
    try:
        params = params_at(axis, value, base)
    except ModelError as exc:
        pt = SweepPoint(value, base)
        pt.errors = {m: f"{type(exc).__name__}: {exc}" for m in models}
        return pt
    return solve_at(params, value, models)


def solve_at(params: ModelParams, value: float = math.nan, models=MODELS) -> SweepPoint:
    """Solve every requested model at ``params``; ``value`` labels the row."""
    pt = SweepPoint(value, params)
    solvers = {"benchmark": solve_benchmark, "dual": solve_dual}
    for m in models:
        try:
            eq = solvers[m](params)
            setattr(pt, m, eq)
            pt.metrics[m] = compute_metrics(eq, params)
        except (ModelError, ArithmeticError, ValueError) as exc:
            pt.errors[m] = f"{type(exc).__name__}: {exc}"
    return pt


def _solve_star(args):
    return solve_point(*args)


def map_points(args_list, jobs: int = 1):
    """Evaluate in a process pool; results keep the input order."""
    if jobs <= 1 or len(args_list) <= 1:
        return [_solve_star(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_solve_star, args_list, chunksize=1))


def _row(pt: SweepPoint, model: str) -> dict:
    nan = math.nan
    row = dict.fromkeys(CSV_COLUMNS, nan)
    row.update(axis=pt.value, sigma_v=pt.params.sigma_v, sigma_e=pt.params.sigma_e,
               model=model, flags="")
    if model in pt.errors:
        row["flags"] = "error:" + pt.errors[model].replace(",", " ").replace("\n", " ")
        return row
    eq = getattr(pt, model)
    mt: MetricsReport = pt.metrics[model]
    row.update(
        spread_norm=eq.spread_norm, gamma_bar_e=eq.gamma_bar_e,
        gamma_low_e=eq.gamma_low_e, alpha_e=eq.alpha_e, snr=mt.signal_to_noise,
        rmse=mt.rmse, v_dark=mt.v_dark, v_exchange=mt.v_exchange,
        v_total=mt.v_total, dark_share=mt.dark_market_share,
        predictive_fraction=mt.predictive_fraction,
    )
    flags = list(mt.flags)
    if model == "dual":
        row.update(s0=eq.s0_scaled, s1=eq.s1_scaled, r_bar=eq.r_bar, r_low=eq.r_low,
                   gamma_bar_d=eq.gamma_bar_d, gamma_low_d=eq.gamma_low_d,
                   alpha_d=eq.alpha_d, residual_max=eq.residual_max)
        if eq.multiple:
            flags.append(f"multiple:{len(eq.alternatives) + 1}")
        if eq.rate_method != "quadrature":
            flags.append(f"rates:{eq.rate_method}")
    else:
        row.update(s_hat=eq.s_hat_scaled, gamma_bar_d=0.0, gamma_low_d=0.0,
                   alpha_d=0.0, residual_max=abs(eq.residual))
    row["flags"] = ";".join(flags)
    return row


@dataclass
class SweepResult:
    spec: SweepSpec
    points: list

    @property
    def rows(self) -> list:
        return [_row(pt, m) for pt in self.points for m in self.spec.models]

    def column(self, model: str, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows if r["model"] == model], dtype=float)

    @property
    def failures(self) -> int:
        return sum(len(pt.errors) for pt in self.points)

    def to_csv(self, fh=None) -> str:
        """Write the table; returns the text. Floats use ``repr`` so that
        reruns are byte-identical."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def sweep(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Solve every grid point of ``spec``; failed points never abort."""
    args = [(spec.axis, v, spec.base_params, spec.models) for v in spec.grid]
    return SweepResult(spec, map_points(args, jobs))


# --------------------------------------------------------------------------
# Cross-model comparison


_LIMIT_CACHE: dict = {}


def _limits(params: ModelParams):
    key = params.with_sigmas(1.0, 1.0).digest()
    if key not in _LIMIT_CACHE:
        _LIMIT_CACHE[key] = dual_limits_large_sigma(params)
    return _LIMIT_CACHE[key]


@dataclass(frozen=True)
class ComparisonRecord:
    sigma_ratio: float
    informed_gap_e_bench: float
    informed_gap_e_dual: float
    alpha_e_bench: float
    alpha_e_dual: float
    alpha_total_dual: float
    spread_bench: float
    spread_dual: float
    snr_bench: float
    snr_dual: float
    rmse_bench: float
    rmse_dual: float
    side_condition: bool
    side_condition_rhs: float

    @property
    def exchange_participation_falls(self) -> bool:
        return self.alpha_e_dual <= self.alpha_e_bench

    @property
    def informed_gap_falls(self) -> bool:
        return self.informed_gap_e_dual <= self.informed_gap_e_bench

    @property
    def liquidity_expands(self) -> bool:
        return self.alpha_total_dual >= self.alpha_e_bench

    @property
    def spread_widens(self) -> bool:
        return self.spread_dual >= self.spread_bench

    @property
    def discovery_improves(self) -> bool:
        return self.snr_dual >= self.snr_bench

    def to_dict(self) -> dict:
        return asdict(self)


def compare_models(params: ModelParams) -> ComparisonRecord:
    """Benchmark and dual-venue equilibria side by side."""
    b = solve_benchmark(params)
    d = solve_dual(params)
    mb, md = compute_metrics(b, params), compute_metrics(d, params)
    lim = _limits(params)
    return ComparisonRecord(
        sigma_ratio=params.sigma_ratio,
        informed_gap_e_bench=b.gamma_bar_e - b.gamma_low_e,
        informed_gap_e_dual=d.gamma_bar_e - d.gamma_low_e,
        alpha_e_bench=b.alpha_e,
        alpha_e_dual=d.alpha_e,
        alpha_total_dual=d.alpha_e + d.alpha_d,
        spread_bench=b.spread_norm,
        spread_dual=d.spread_norm,
        snr_bench=mb.signal_to_noise,
        snr_dual=md.signal_to_noise,
        rmse_bench=mb.rmse,
        rmse_dual=md.rmse,
        side_condition=lim.side_condition,
        side_condition_rhs=lim.side_condition_rhs,
    )


# --------------------------------------------------------------------------
# Threshold of the information advantage


THRESHOLD_GRID = 64
THRESHOLD_SPAN = (1e-3, 1e3)
THRESHOLD_RTOL = 1e-6


def snr_gap(sigma_ratio: float, params: ModelParams) -> float:
    """``I^S - I`` at information advantage ``sigma_ratio``."""
    p = params.with_sigmas(sigma_ratio, 1.0)
    sd = p.z_law.sigma_z
    b, d = solve_benchmark(p), solve_dual(p)
    i_s = (b.gamma_bar_e - b.gamma_low_e) * p.mu / (b.alpha_e * sd)
    i_d = (d.gamma_bar_e - d.gamma_low_e) * p.mu / (d.alpha_e * sd)
    return i_s - i_d


@dataclass(frozen=True)
class ThresholdResult:
    sigma_bar_v: float
    sigma_bar: float
    sigma_e: float
    bracket: tuple
    crossings: int
    open_interval: bool
    scanned: tuple
    regime_binds: bool
    grid: tuple = ()
    gaps: tuple = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("grid")
        d.pop("gaps")
        return d


_THRESHOLD_CACHE: dict = {}


def scaled_threshold(params: ModelParams, n_grid: int = THRESHOLD_GRID,
                     span=THRESHOLD_SPAN, rtol: float = THRESHOLD_RTOL, jobs: int = 1):
    """First crossing of ``I^S - I`` from positive to nonpositive in the
    information advantage.

    Returns ``(sigma_bar, bracket, crossings, open_interval, grid, gaps)``.
    When no crossing exists on the scanned range, ``sigma_bar`` is the
    upper scan bound (gap positive throughout) or the lower one.
    """
    key = (params.with_sigmas(1.0, 1.0).digest(), n_grid, tuple(span), rtol)
    if key in _THRESHOLD_CACHE:
        return _THRESHOLD_CACHE[key]
    grid = np.geomspace(span[0], span[1], n_grid)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            gaps = np.array(list(ex.map(snr_gap, grid, [params] * n_grid)))
    else:
        gaps = np.array([snr_gap(s, params) for s in grid])
    pos = gaps > 0
    crossings = int(np.sum(pos[:-1] & ~pos[1:]))
    if not pos[0]:
        out = (float(grid[0]), (0.0, float(grid[0])), crossings, True, grid, gaps)
    elif pos.all():
        out = (float(grid[-1]), (float(grid[-1]), math.inf), 0, True, grid, gaps)
    else:
        i = int(np.argmin(pos))
        lo, hi = float(grid[i - 1]), float(grid[i])
        while (hi - lo) > rtol * lo:
            mid = math.sqrt(lo * hi)
            if snr_gap(mid, params) > 0:
                lo = mid
            else:
                hi = mid
        out = (math.sqrt(lo * hi), (lo, hi), crossings, False, grid, gaps)
    _THRESHOLD_CACHE[key] = out
    return out


def threshold_sigma_bar(sigma_e: float, params: ModelParams, jobs: int = 1,
                        **kw) -> ThresholdResult:
    """Largest ``sigma_v`` below which adding the dark pool lowers the
    exchange signal-to-noise ratio, at signal noise ``sigma_e``.

    Scaled equilibria depend on ``sigma_v / sigma_e`` alone, so the search
    runs once in that ratio and the result scales linearly in ``sigma_e``.
    """
    if not (sigma_e > 0 and math.isfinite(sigma_e)):
        raise ValueError("sigma_e must be positive and finite")
    sb, br, n, open_, grid, gaps = scaled_threshold(params, jobs=jobs, **kw)
    span = kw.get("span", THRESHOLD_SPAN)
    # the literal regime condition k_hat <= mu_z / mu
    binds = not (limit_khat(params) <= params.mu_ratio)
    return ThresholdResult(
        sigma_bar_v=sb * sigma_e,
        sigma_bar=sb,
        sigma_e=float(sigma_e),
        bracket=(br[0] * sigma_e, br[1] * sigma_e),
        crossings=n,
        open_interval=open_,
        scanned=(span[0] * sigma_e, span[1] * sigma_e),
        regime_binds=binds,
        grid=tuple(grid),
        gaps=tuple(gaps),
    )


@dataclass
class ThresholdTable:
    mu_over_mu_z: tuple
    results: list
    errors: dict

    @property
    def sigma_bar_v(self) -> np.ndarray:
        return np.array([r.sigma_bar_v if r is not None else math.nan
                         for r in self.results])

    @property
    def increasing_fraction(self) -> float:
        """Share of grid steps on which the threshold rises; descriptive."""
        y = self.sigma_bar_v
        d = np.diff(y[np.isfinite(y)])
        return float(np.mean(d > 0)) if d.size else math.nan

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("mu_over_mu_z", "sigma_e", "sigma_bar_v", "sigma_bar",
                    "crossings", "flags"))
        for i, (m, r) in enumerate(zip(self.mu_over_mu_z, self.results)):
            if r is None:
                w.writerow((repr(m), "nan", "nan", "nan", "0", "error:" + self.errors[i]))
                continue
            flags = ";".join(f for f, on in (("open-interval", r.open_interval),
                                              ("regime-binds", r.regime_binds)) if on)
            w.writerow((repr(m), repr(r.sigma_e), repr(r.sigma_bar_v), repr(r.sigma_bar),
                        str(r.crossings), flags))
        return buf.getvalue()


def threshold_vs_mu_ratio(grid, sigma_e: float, params: ModelParams, jobs: int = 1,
                          **kw) -> ThresholdTable:
    """Threshold at each ``mu / mu_z`` in ``grid``."""
    grid = tuple(float(v) for v in grid)
    results, errors = [], {}
    for i, m in enumerate(grid):
        try:
            results.append(threshold_sigma_bar(sigma_e, params.with_mu_ratio(m),
                                               jobs=jobs, **kw))
        except (ModelError, ArithmeticError, ValueError) as exc:
            results.append(None)
            errors[i] = f"{type(exc).__name__}: {exc}"
    return ThresholdTable(grid, results, errors)


# --------------------------------------------------------------------------
# Shape statistics


@dataclass(frozen=True)
class ShapeStats:
    argmax: int
    interior_max: bool
    rises_after_peak: int
    falls_before_peak: int

    @property
    def inverted_u(self) -> bool:
        """Rise then fall, allowing one reversed step on each side."""
        return (self.interior_max and self.rises_after_peak <= 1
                and self.falls_before_peak <= 1)


def shape_stats(y, x=None, tol: float = 0.0) -> ShapeStats:
    """Location of the maximum of ``y`` (ordered by ``x`` when given) and
    the number of steps going against a single-peaked shape."""
    y = np.asarray(y, dtype=float)
    if x is not None:
        y = y[np.argsort(np.asarray(x, dtype=float), kind="stable")]
    k = int(np.nanargmax(y))
    d = np.diff(y)
    return ShapeStats(
        argmax=k,
        interior_max=0 < k < len(y) - 1,
        rises_after_peak=int(np.sum(d[k:] > tol)),
        falls_before_peak=int(np.sum(d[:k] < -tol)),
    )


def monotone_violations(y, increasing: bool = True, tol: float = 0.0) -> int:
    d = np.diff(np.asarray(y, dtype=float))
    return int(np.sum(d < -tol) if increasing else np.sum(d > tol))


# --------------------------------------------------------------------------
# Figure presets


@dataclass(frozen=True)
class FigurePreset:
    name: str
    kind: str  # "sweep", "threshold_mu" or "threshold_sigma_e"
    axis: str
    grid: tuple
    mu_over_mu_z: float | None = None
    columns: tuple = ()
    x_column: str = "axis"
    description: str = ""


def _lin(a, b, n):
    return tuple(float(v) for v in np.linspace(a, b, n))


FIGURES = {
    "fig4": FigurePreset("fig4", "sweep", "sigma_e_log", _lin(-2, 2, 41),
                         columns=("spread_norm", "r_bar", "r_low"),
                         description="exchange spread and dark adverse selection vs log sigma_e"),
    "fig5": FigurePreset("fig5", "sweep", "sigma_e_log", _lin(-2, 2, 41),
                         columns=("alpha_e", "alpha_d", "gamma_bar_e", "gamma_low_e",
                                  "gamma_bar_d", "gamma_low_d"),
                         description="participation fractions vs log sigma_e"),
    "fig6": FigurePreset("fig6", "sweep", "sigma_e_log", _lin(-2, 2, 41),
                         columns=("r_bar", "r_low"),
                         description="dark non-execution probability vs log sigma_e"),
    "fig7": FigurePreset("fig7", "sweep", "sigma_e_log", _lin(-2, 2, 41),
                         columns=("r_bar", "r_low"), x_column="spread_norm",
                         description="dark non-execution probability vs spread"),
    "fig8": FigurePreset("fig8", "sweep", "sigma_ratio_log", _lin(math.log(1e-2), math.log(1e2), 41),
                         columns=("snr", "rmse"),
                         description="signal-to-noise ratio of both models vs information advantage"),
    "fig9": FigurePreset("fig9", "threshold_mu", "mu_ratio", _lin(0.1, 1.0, 10),
                         description="threshold sigma_v vs mu / mu_z at log sigma_e = 0"),
    "fig9b": FigurePreset("fig9b", "threshold_sigma_e", "sigma_e_log", _lin(-2, 2, 9),
                          mu_over_mu_z=0.2,
                          description="threshold sigma_v vs log sigma_e at mu / mu_z = 0.2"),
    "fig10": FigurePreset("fig10", "sweep", "sigma_e_log", _lin(-2, 2, 41),
                          columns=("v_dark", "v_total", "dark_share"),
                          description="dark and total volume, dark share vs log sigma_e and spread"),
    "fig11": FigurePreset("fig11", "sweep", "sigma_e_log", _lin(-2, 2, 41),
                          columns=("predictive_fraction", "r_bar", "r_low"), x_column="spread_norm",
                          description="predictive fraction and adverse selection vs spread"),
}


def run_figure(name: str, params: ModelParams, jobs: int = 1):
    """Run a preset; sweeps return a :class:`SweepResult`, threshold
    presets a :class:`ThresholdTable`."""
    fp = FIGURES[name]
    base = params if fp.mu_over_mu_z is None else params.with_mu_ratio(fp.mu_over_mu_z)
    if fp.kind == "sweep":
        return sweep(SweepSpec(fp.axis, fp.grid, base), jobs=jobs)
    if fp.kind == "threshold_mu":
        return threshold_vs_mu_ratio(fp.grid, 1.0, base, jobs=jobs)
    rows = [threshold_sigma_bar(math.exp(v), base, jobs=jobs) for v in fp.grid]
    return ThresholdTable(tuple(base.mu / base.mu_z for _ in rows), rows, {})


def gnuplot_script(name: str, csv_path: str) -> str:
    """Plot commands for a sweep preset's CSV output."""
    fp = FIGURES[name]
    idx = {c: i + 1 for i, c in enumerate(CSV_COLUMNS)}
    x = idx[fp.x_column]
    lines = ["set datafile separator ','", "set key autotitle columnhead",
             f"set title '{fp.description}'"]
    plots = []
    for model in ("benchmark", "dual"):
        for c in fp.columns:
            plots.append(f"'{csv_path}' using (stringcolumn(4) eq '{model}' ? ${x} : 1/0):{idx[c]} "
                         f"with linespoints title '{c} ({model})'")
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"
