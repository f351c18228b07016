"""Experiment configuration, the seeded multi-trial loop, evaluation metrics and CSV traces.

Within a trial every algorithm sees the same ground-truth function and
the same noise stream, indexed by step, so curves are paired.
"""

from __future__ import annotations

import csv
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import yaml

from .algorithms import BptLse, BptTs, BptUcb, LseState, PtrStrategy
from .baselines import LSE_STRATEGIES, OPT_STRATEGIES, BaselineParams, make_baseline
from .benchmarks import Benchmark, build_benchmark, list_benchmarks
from .errors import ConfigurationError, NumericError
from .gp import GpModel, fit_hyperparameters
from .ptr import AlgoParams, BetaSchedule, eta_from_epsilon, p_upper_true

log = logging.getLogger(__name__)

PROPOSED = {"opt": ("bpt-ucb", "bpt-ts"), "lse": ("bpt-lse",)}
VARIANT_PREFIXES = (("pmax-", "pmax"), ("p-", "p-adapted"))
CSV_HEADER = ("trial", "step", "algorithm", "event", "x_index", "w_index", "y", "metric", "value")

TOP_KEYS = {
    "benchmark", "overrides", "h", "alpha", "algorithms", "T", "trials", "seed", "params",
    "baseline_params", "sampler", "num_features", "workers", "fit_hyperparameters", "out",
}
PARAM_KEYS = {"beta", "beta_schedule", "beta_convention", "delta", "m", "eta", "epsilon",
              "sigma0_min", "clamp", "freeze"}
BASELINE_KEYS = {"beta_sqrt", "bq_lse_beta_sqrt", "stable_level", "stable_set"}
# practical defaults: beta_t = 2 for optimization, 1.5 for level-set estimation
DEFAULT_BETA = {"opt": 2.0, "lse": 1.5}


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    strategy: str
    variant: str = "native"

    @property
    def proposed(self) -> bool:
        return self.strategy.startswith("bpt-")


def parse_algorithm(name: str, task: str) -> AlgorithmSpec:
    """Resolve a name such as ``bpt-ucb``, ``gp-ucb`` or ``pmax-stableopt`` against ``task``."""
    if not isinstance(name, str):
        raise ConfigurationError(f"algorithms: entries must be strings, got {name!r}")
    key = name.strip().lower()
    if key in PROPOSED[task]:
        return AlgorithmSpec(key, key)
    variant, base = "native", key
    for prefix, v in VARIANT_PREFIXES:
        if key.startswith(prefix):
            variant, base = v, key[len(prefix):]
            break
    allowed = OPT_STRATEGIES if task == "opt" else LSE_STRATEGIES
    expected_variant = "pmax" if task == "opt" else "p-adapted"
    if base not in allowed or variant not in ("native", expected_variant):
        choices = list(PROPOSED[task]) + list(allowed) + [f"{expected_variant.split('-')[0]}-{b}" for b in allowed]
        raise ConfigurationError(f"algorithms: unknown {task} algorithm {name!r}; choose from {choices}")
    return AlgorithmSpec(key, base, variant)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    benchmark: Benchmark
    algorithms: tuple[AlgorithmSpec, ...]
    T: int
    trials: int
    seed: int
    params: Mapping = field(default_factory=dict)
    baseline_params: BaselineParams = field(default_factory=BaselineParams)
    sampler: str = "exact-grid"
    num_features: int = 1000
    workers: int = 1
    fit_hyperparameters: bool = False
    out: str | None = None
    overrides: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.T < 1:
            raise ConfigurationError("T: budget must be >= 1")
        if self.trials < 1:
            raise ConfigurationError("trials: must be >= 1")
        if self.workers < 1:
            raise ConfigurationError("workers: must be >= 1")
        if not self.algorithms:
            raise ConfigurationError("algorithms: at least one algorithm is required")
        if self.sampler not in ("exact-grid", "rff"):
            raise ConfigurationError(f"sampler: unknown sampler {self.sampler!r}")

    @property
    def task(self) -> str:
        return self.benchmark.task

    @property
    def h(self) -> float:
        return self.benchmark.h

    @property
    def alpha(self) -> float | None:
        return self.benchmark.alpha

    @property
    def kernel(self):
        return self.benchmark.kernel

    def algo_params(self, spec: AlgorithmSpec | None = None) -> AlgoParams:
        """Parameters of the proposed rule (also used by P/Pmax adapters) for ``spec``."""
        p = dict(self.params)
        bench = self.benchmark
        delta = float(p.get("delta", 0.1))
        sigma0 = float(p.get("sigma0_min", math.sqrt(bench.kernel.signal_variance)))
        epsilon = float(p.get("epsilon", 0.0))
        kind = p.get("beta_schedule", "constant")
        beta = BetaSchedule(kind, float(p.get("beta", DEFAULT_BETA[self.task])), delta,
                            p.get("beta_convention", "regret"))
        eta = p.get("eta", 0.0)
        if eta == "auto":
            variant = {"bpt-ucb": "ucb", "bpt-ts": "ts"}.get(spec.strategy if spec else "", None)
            variant = variant or ("lse" if self.task == "lse" else "ucb")
            eta = eta_from_epsilon(variant, epsilon, delta, sigma0, bench.domain.n_design)
        return AlgoParams(
            h=bench.threshold, eta=float(eta), m=float(p.get("m", 2.0)), beta=beta, epsilon=epsilon,
            delta=delta, alpha=bench.alpha, sigma0_min=sigma0, clamp=bool(p.get("clamp", True)),
            freeze=bool(p.get("freeze", True)),
        )

    def replace(self, **changes) -> "ExperimentConfig":
        from dataclasses import replace as _replace
        return _replace(self, **changes)


def _check_keys(section: Mapping, allowed: set, where: str):
    if not isinstance(section, Mapping):
        raise ConfigurationError(f"{where}: expected a mapping")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigurationError(f"{where}: unknown key(s) {unknown}")


def _as_int(raw: Mapping, key: str, default=None) -> int:
    v = raw.get(key, default)
    if v is None:
        raise ConfigurationError(f"{key}: required")
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)) and not (isinstance(v, float) and v.is_integer()):
        raise ConfigurationError(f"{key}: expected an integer, got {v!r}")
    return int(v)


def config_from_dict(raw: Mapping) -> ExperimentConfig:
    """Validate a parsed config mapping and fill defaults from the benchmark registry."""
    _check_keys(raw, TOP_KEYS, "config")
    name = raw.get("benchmark")
    if name not in list_benchmarks():
        raise ConfigurationError(f"benchmark: unknown benchmark {name!r}; available: {sorted(list_benchmarks())}")
    overrides = dict(raw.get("overrides") or {})
    for key in ("h", "alpha"):
        if key in raw:
            overrides[key] = raw[key]
    try:
        bench = build_benchmark(name, overrides)
    except ConfigurationError as exc:
        raise ConfigurationError(f"overrides: {exc}") from exc
    algos = raw.get("algorithms")
    if not isinstance(algos, (list, tuple)) or not algos:
        raise ConfigurationError("algorithms: expected a nonempty list")
    specs = tuple(parse_algorithm(a, bench.task) for a in algos)
    if len({s.name for s in specs}) != len(specs):
        raise ConfigurationError("algorithms: duplicate entries")
    params = dict(raw.get("params") or {})
    _check_keys(params, PARAM_KEYS, "params")
    bp = dict(raw.get("baseline_params") or {})
    _check_keys(bp, BASELINE_KEYS, "baseline_params")
    if "stable_set" in bp and bp["stable_set"] is not None:
        bp["stable_set"] = tuple(int(i) for i in bp["stable_set"])
    try:
        bparams = BaselineParams(**bp)
    except ConfigurationError as exc:
        raise ConfigurationError(f"baseline_params: {exc}") from exc
    cfg = ExperimentConfig(
        benchmark=bench,
        algorithms=specs,
        T=_as_int(raw, "T"),
        trials=_as_int(raw, "trials", 10),
        seed=_as_int(raw, "seed", 0),
        params=params,
        baseline_params=bparams,
        sampler=raw.get("sampler", bench.settings.get("sampler", "exact-grid")),
        num_features=_as_int(raw, "num_features", 1000),
        workers=_as_int(raw, "workers", 1),
        fit_hyperparameters=bool(raw.get("fit_hyperparameters", bench.fit_space is not None)),
        out=raw.get("out"),
        overrides=overrides,
    )
    for spec in specs:
        try:
            cfg.algo_params(spec)
        except ConfigurationError as exc:
            raise ConfigurationError(f"params: {exc}") from exc
    return cfg


def load_config(path) -> ExperimentConfig:
    """Read a YAML experiment file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(raw, Mapping):
        raise ConfigurationError(f"config {path}: top level must be a mapping")
    return config_from_dict(raw)


# ---------------------------------------------------------------- metrics


def utility_gap(x_hat: int, p_true) -> float:
    p = np.asarray(p_true, dtype=float)
    return float(p.max() - p[int(x_hat)])


def cumulative_eps_regret(queried_x, p_true, epsilon: float = 0.0) -> np.ndarray:
    """Running sum of ``(p(x*) - eps) - p(x_t)`` over the queried design points."""
    p = np.asarray(p_true, dtype=float)
    x = np.asarray(queried_x, dtype=int)
    return np.cumsum((p.max() - epsilon) - p[x])


def true_labels(p_true, alpha: float) -> np.ndarray:
    """+1 where ``p_upper >= alpha`` (superlevel set), -1 elsewhere."""
    return np.where(np.asarray(p_true) >= alpha, 1, -1).astype(np.int8)


def _positives(s) -> np.ndarray:
    arr = s.labels if isinstance(s, LseState) else np.asarray(s)
    return arr == 1 if arr.dtype != bool else arr


def f1_score(estimated, truth) -> float:
    """F1 with the superlevel set as the positive class; unclassified points count as negative."""
    pred = _positives(estimated)
    act = _positives(truth)
    if pred.shape != act.shape:
        raise ConfigurationError("estimated and true labels differ in length")
    tp = int(np.sum(pred & act))
    fp = int(np.sum(pred & ~act))
    fn = int(np.sum(~pred & act))
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def e_alpha(state: LseState, p_true, alpha: float) -> np.ndarray:
    """Misclassification loss per design point; zero on unclassified points."""
    p = np.asarray(p_true, dtype=float)
    loss = np.zeros_like(p)
    loss = np.where(state.labels == -1, np.maximum(0.0, p - alpha), loss)
    return np.where(state.labels == 1, np.maximum(0.0, alpha - p), loss)


# ---------------------------------------------------------------- traces


@dataclass(frozen=True)
class TraceRecord:
    trial: int
    step: int
    algorithm: str
    event: str
    x_index: int | None
    w_index: int | None
    y: float | None
    metric: str
    value: float


@dataclass
class TrialTrace:
    trial: int
    algorithm: str
    records: list = field(default_factory=list)
    status: str = "ok"

    def add(self, step, event, metric, value, x=None, w=None, y=None):
        self.records.append(TraceRecord(self.trial, step, self.algorithm, event, x, w, y, metric, float(value)))

    def series(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        rows = [r for r in self.records if r.metric == metric]
        return np.array([r.step for r in rows]), np.array([r.value for r in rows])

    def queries(self) -> list[TraceRecord]:
        return [r for r in self.records if r.event == "query" and r.metric == "acquisition"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_trace_csv(traces, path) -> Path:
    """Write all records, ordered by (trial, step, algorithm position, record order)."""
    path = Path(path)
    order = {}
    for tr in traces:
        order.setdefault(tr.algorithm, len(order))
    rows = [
        (r.trial, r.step, order[r.algorithm], k, r)
        for tr in traces for k, r in enumerate(tr.records)
    ]
    rows.sort(key=lambda t: t[:4])
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for *_, r in rows:
                w.writerow([r.trial, r.step, r.algorithm, r.event, _fmt(r.x_index), _fmt(r.w_index),
                            _fmt(r.y), r.metric, _fmt(r.value)])
    except OSError as exc:
        raise OSError(f"cannot write trace {path}: {exc}") from exc
    return path


def read_trace_csv(path) -> list[TraceRecord]:
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise OSError(f"cannot read trace {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ConfigurationError(f"{path}: unexpected header {header}")
        opt_int = lambda s: int(s) if s else None  # noqa: E731
        opt_float = lambda s: float(s) if s else None  # noqa: E731
        return [
            TraceRecord(int(t), int(s), a, e, opt_int(x), opt_int(w), opt_float(y), m, float(v))
            for t, s, a, e, x, w, y, m, v in reader
        ]


# ---------------------------------------------------------------- experiment loop


def _seed_seq(seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), *keys])


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode())


def make_strategy(spec: AlgorithmSpec, cfg: ExperimentConfig) -> PtrStrategy:
    dom = cfg.benchmark.domain
    params = cfg.algo_params(spec)
    if spec.strategy == "bpt-ucb":
        return BptUcb(dom, params)
    if spec.strategy == "bpt-ts":
        return BptTs(dom, params, cfg.sampler, cfg.num_features)
    if spec.strategy == "bpt-lse":
        return BptLse(dom, params)
    from dataclasses import replace
    bp = replace(cfg.baseline_params, sampler=cfg.sampler, num_features=cfg.num_features)
    return make_baseline(cfg.task, spec.strategy, dom, params, bp, spec.variant)


@dataclass(frozen=True)
class TrialContext:
    """Everything shared by the algorithms of one trial."""

    trial: int
    f_grid: np.ndarray
    p_true: np.ndarray
    noise: np.ndarray


def trial_context(cfg: ExperimentConfig, trial: int) -> TrialContext:
    bench = cfg.benchmark
    f_rng = np.random.default_rng(_seed_seq(cfg.seed, trial, 0))
    f = bench.true_function(f_rng)
    noise = np.random.default_rng(_seed_seq(cfg.seed, trial, 1)).standard_normal(cfg.T)
    return TrialContext(trial, f, p_upper_true(f, bench.threshold, bench.domain), noise)


Monitor = Callable[..., None]


def run_algorithm(cfg: ExperimentConfig, spec: AlgorithmSpec, ctx: TrialContext,
                  monitor: Monitor | None = None) -> TrialTrace:
    """One (trial, algorithm) run. Numeric failures end the run with a status row."""
    bench = cfg.benchmark
    dom = bench.domain
    trace = TrialTrace(ctx.trial, spec.name)
    strat = make_strategy(spec, cfg)
    params = strat.params
    rng = np.random.default_rng(_seed_seq(cfg.seed, ctx.trial, 2, _name_key(spec.name)))
    model = GpModel(bench.kernel, bench.noise_variance)
    noise_sd = math.sqrt(bench.noise_variance)
    state = LseState.initial(dom.n_design) if cfg.task == "lse" else None
    truth = true_labels(ctx.p_true, bench.alpha) if cfg.task == "lse" else None
    queried: list[int] = []
    regret = 0.0
    p_star = float(ctx.p_true.max())
    t = 0
    try:
        for t in range(1, cfg.T + 1):
            prev = model
            q = strat.select(model, t, rng=rng, state=state, queried_x=queried)
            i, j = q.x_index, q.w_index
            y = float(ctx.f_grid[i, j] + noise_sd * ctx.noise[t - 1])
            model = model.condition(dom.point(i, j), y)
            if cfg.fit_hyperparameters and bench.fit_space and bench.fit_every and t % bench.fit_every == 0:
                kern, nv = fit_hyperparameters(model, bench.fit_space, seed=_seed_seq(cfg.seed, ctx.trial, 3, t))
                model = model.refit(kern, nv)
            queried.append(i)
            trace.add(t, "query", "acquisition", q.acquisition, i, j, y)
            for key in sorted(q.info):
                trace.add(t, "query", key, q.info[key], i, j, y)
            if cfg.task == "opt":
                x_hat = strat.recommend(model, queried)
                regret += (p_star - params.epsilon) - ctx.p_true[i]
                trace.add(t, "metric", "recommended", x_hat, i, j, y)
                trace.add(t, "metric", "utility_gap", utility_gap(x_hat, ctx.p_true), i, j, y)
                trace.add(t, "metric", "cumulative_eps_regret", regret, i, j, y)
            else:
                state = strat.classify(model, t, state)
                trace.add(t, "metric", "n_H", state.H.size, i, j, y)
                trace.add(t, "metric", "n_L", state.L.size, i, j, y)
                trace.add(t, "metric", "n_U", state.U.size, i, j, y)
                trace.add(t, "metric", "f1", f1_score(state, truth), i, j, y)
                trace.add(t, "metric", "max_e_alpha", e_alpha(state, ctx.p_true, bench.alpha).max(), i, j, y)
            if monitor is not None:
                monitor(trial=ctx.trial, algorithm=spec.name, step=t, prev=prev, model=model,
                        query=q, strategy=strat, state=state)
            if cfg.task == "lse" and state.U.size == 0:
                trace.add(t, "status", "terminated", t)
                break
    except (NumericError, np.linalg.LinAlgError) as exc:
        log.warning("trial %d, %s aborted at step %d: %s", ctx.trial, spec.name, t, exc)
        trace.status = f"error: {exc}"
        trace.add(t, "status", f"error:{type(exc).__name__}", t)
    return trace


def run_trial(cfg: ExperimentConfig, trial: int, monitor: Monitor | None = None) -> list[TrialTrace]:
    ctx = trial_context(cfg, trial)
    return [run_algorithm(cfg, spec, ctx, monitor) for spec in cfg.algorithms]


def run_experiment(cfg: ExperimentConfig, monitor: Monitor | None = None) -> list[TrialTrace]:
    """All trials for all algorithms; parallel across trials when ``workers > 1`` and no monitor."""
    if cfg.workers > 1 and monitor is None and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            per_trial = list(pool.map(run_trial, [cfg] * cfg.trials, range(cfg.trials)))
    else:
        per_trial = [run_trial(cfg, k, monitor) for k in range(cfg.trials)]
    return [tr for group in per_trial for tr in group]


def final_metric(traces, algorithm: str, metric: str) -> np.ndarray:
    """Last recorded value of ``metric`` per trial for ``algorithm``."""
    out = []
    for tr in traces:
        if tr.algorithm == algorithm:
            _, vals = tr.series(metric)
            out.append(vals[-1] if vals.size else np.nan)
    return np.array(out)


def metric_at(traces, algorithm: str, metric: str, step: int) -> np.ndarray:
    """Value of ``metric`` at ``step`` (or the last earlier step) per trial."""
    out = []
    for tr in traces:
        if tr.algorithm == algorithm:
            steps, vals = tr.series(metric)
            k = np.searchsorted(steps, step, side="right") - 1
            out.append(vals[k] if k >= 0 else np.nan)
    return np.array(out)
