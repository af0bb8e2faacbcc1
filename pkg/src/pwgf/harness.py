"""Experiment runner: Poisson GAN, toy Bernoulli objective, estimator variance bench.

Every run is a pure function of its :class:`ExperimentConfig`; seeds map to
independent :class:`RngStream` trees so estimators compared on the same seed
share discriminator initialization and real-data draws.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cost import CostFunction, quadratic
from .distributions import Bernoulli, Poisson, RngStream
from .errors import NumericError
from .estimators import (
    ESTIMATORS,
    MovingAverageBaseline,
    estimate,
    exact_gradient_oracle,
    parameter_step,
)
from .flow import PARAM_FLOOR, clamp_to_domain
from .neuralnet import Mlp, OptState, init_mlp, mlp_backward, mlp_forward, opt_step
from .wasserstein import KernelSpec

EXPERIMENTS = ("poisson_gan", "toy_bernoulli", "variance_bench")
CSV_HEADER = ("seed", "epoch", "estimator", "param", "gen_objective", "disc_loss")
BENCH_HEADER = ("estimator", "mean", "std", "bias", "n")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "poisson_gan"
    estimators: tuple = ("pwgf_mmd",)
    seeds: tuple = tuple(range(1, 11))
    epochs: int = 100
    n_samples: int = 100
    epsilon: float = 0.1
    gen_lr: float = 0.15
    disc_lr: float = 5e-3
    disc_steps: int = 5
    bandwidth: float | None = 4.0    # None: median heuristic per step
    lambda_true: float = 5.0
    init_param: float = 3.0
    out: str | None = None
    # discriminator regularization and optimizer details
    disc_weight_decay: float = 4.0   # decoupled, applied after every Adam step
    disc_beta2: float = 0.99
    disc_batch: int | None = 1000    # None: same as n_samples
    control_variate: bool = True     # pwgf_mmd: subtract the unmoved-particle gradient
    reinforce_baseline: bool = False
    # variance bench snapshot
    repeats: int = 10
    snapshot_param: float = 4.5
    snapshot_train_steps: int = 300
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        allowed = ESTIMATORS + ("exact",)
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        for e in self.estimators:
            if e not in allowed:
                raise ConfigError(f"unknown estimator {e!r}; expected one of {allowed}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative")
        for name in ("epochs", "n_samples", "disc_steps", "repeats", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("epsilon", "gen_lr", "disc_lr", "lambda_true", "snapshot_param"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ConfigError("bandwidth must be > 0 or 'median'")
        if self.disc_weight_decay < 0 or not 0 <= self.disc_beta2 < 1:
            raise ConfigError("invalid discriminator optimizer settings")
        if self.experiment == "toy_bernoulli" and not 0 <= self.init_param <= 1:
            raise ConfigError("toy_bernoulli init_param must lie in [0, 1]")
        if self.experiment != "toy_bernoulli" and not self.init_param > 0:
            raise ConfigError("init_param must be > 0")

    @property
    def kernel(self) -> KernelSpec | None:
        return None if self.bandwidth is None else KernelSpec(self.bandwidth)


# Defaults that differ from the Poisson GAN ones.
TOY_DEFAULTS = dict(gen_lr=0.05, init_param=0.5)


@dataclass(frozen=True)
class CurveRow:
    seed: int
    epoch: int
    estimator: str
    param: float
    gen_objective: float
    disc_loss: float | None = None


@dataclass
class LearningCurve:
    rows: list = field(default_factory=list)
    aborted: dict = field(default_factory=dict)  # (estimator, seed) -> message

    def extend(self, other: "LearningCurve"):
        self.rows.extend(other.rows)
        self.aborted.update(other.aborted)

    def sorted_rows(self):
        rank = {name: i for i, name in enumerate(ESTIMATORS + ("exact",))}
        return sorted(self.rows, key=lambda r: (r.seed, r.epoch, rank[r.estimator]))

    def final_params(self, estimator: str) -> dict:
        last = {}
        for r in self.rows:
            if r.estimator == estimator and (estimator, r.seed) not in self.aborted:
                if r.seed not in last or r.epoch > last[r.seed][0]:
                    last[r.seed] = (r.epoch, r.param)
        return {s: v for s, (_, v) in sorted(last.items())}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.sorted_rows():
            w.writerow([r.seed, r.epoch, r.estimator, _fmt(r.param), _fmt(r.gen_objective),
                        _fmt(r.disc_loss)])
        return buf.getvalue()


@dataclass(frozen=True)
class SummaryStats:
    estimator: str
    mean: float
    std: float
    n: int
    bias: float | None = None

    def line(self) -> str:
        return f"{self.estimator} {_fmt(self.mean)} {_fmt(self.std)}"


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6g}"


def summarize(estimator: str, values, bias: float | None = None) -> SummaryStats:
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        return SummaryStats(estimator, float("nan"), float("nan"), 0, bias)
    std = float(v.std(ddof=1)) if v.size >= 2 else float("nan")
    return SummaryStats(estimator, float(v.mean()), std, int(v.size), bias)


# ---------------------------------------------------------------- generator step

def generator_step(name: str, dist, cost: CostFunction, cfg: ExperimentConfig, rng: RngStream,
                   baseline: MovingAverageBaseline | None = None) -> np.ndarray:
    """Estimate of grad_theta E[f] from the named estimator, in parameter units."""
    b = None if baseline is None else baseline.value
    kwargs = {"control_variate": cfg.control_variate} if name == "pwgf_mmd" else {}
    est = estimate(name, dist, cost, cfg.n_samples, rng, epsilon=cfg.epsilon,
                   kernel=cfg.kernel, baseline=b, **kwargs)
    return parameter_step(est, dist, cfg.epsilon)


# ---------------------------------------------------------------- discriminator

def discriminator_cost(net: Mlp) -> CostFunction:
    """f(z) = -w(z): the generator maximizes E[w] under the descent convention."""

    def ev(z):
        return -mlp_forward(net, z[:, 0])[0]

    def gr(z):
        _, cache = mlp_forward(net, z[:, 0])
        return -mlp_backward(net, cache, 1.0)[1][:, None]

    return CostFunction(ev, gr, validate=False)


def _decay(net: Mlp, factor: float) -> Mlp:
    return Mlp(tuple(w * factor for w in net.weights), tuple(b * factor for b in net.biases))


def discriminator_step(net: Mlp, state: OptState, real, fake, weight_decay: float):
    """One Adam step on mean w(fake) - mean w(real); returns (net, state, loss)."""
    w_fake, c_fake = mlp_forward(net, fake)
    w_real, c_real = mlp_forward(net, real)
    g_fake, _ = mlp_backward(net, c_fake, 1.0 / fake.size)
    g_real, _ = mlp_backward(net, c_real, -1.0 / real.size)
    net, state = opt_step(net, g_fake + g_real, state)
    if weight_decay:
        net = _decay(net, 1.0 - state.lr * weight_decay)
    return net, state, float(w_fake.mean() - w_real.mean())


def train_discriminator(net: Mlp, state: OptState, true_dist, fake_dist, cfg: ExperimentConfig,
                        steps: int, rng: RngStream):
    batch = cfg.disc_batch or cfg.n_samples
    loss = float("nan")
    for s in range(steps):
        r = rng.child(s)
        real = true_dist.sample(batch, r.child(0)).flat()
        fake = fake_dist.sample(batch, r.child(1)).flat()
        net, state, loss = discriminator_step(net, state, real, fake, cfg.disc_weight_decay)
    if not net.all_finite():
        raise NumericError("non-finite discriminator weights")
    return net, state, loss


def _new_discriminator(cfg: ExperimentConfig, rng: RngStream):
    net = init_mlp(rng)
    return net, OptState.for_net(net, cfg.disc_lr, beta2=cfg.disc_beta2)


def expected_w(net: Mlp, dist) -> float:
    atoms, probs = dist.truncated_support()
    return float(probs @ mlp_forward(net, atoms)[0])


# ---------------------------------------------------------------- experiments

def _gan_seed(cfg: ExperimentConfig, name: str, seed: int) -> LearningCurve:
    curve = LearningCurve()
    rng = RngStream(seed)
    true_dist = Poisson(cfg.lambda_true)
    net, state = _new_discriminator(cfg, rng.child(0))
    lam = cfg.init_param
    baseline = MovingAverageBaseline() if cfg.reinforce_baseline and name == "reinforce" else None
    for epoch in range(1, cfg.epochs + 1):
        er = rng.child(epoch)
        try:
            fake = Poisson(lam)
            net, state, loss = train_discriminator(net, state, true_dist, fake, cfg, cfg.disc_steps,
                                                   er.child(0))
            cost = discriminator_cost(net)
            g = generator_step(name, fake, cost, cfg, er.child(1), baseline)
            if baseline is not None:
                baseline.update(-expected_w(net, fake))
            new = lam - cfg.gen_lr * float(g[0])
            if not np.isfinite(new):
                raise NumericError(f"non-finite lambda at epoch {epoch}")
            lam = clamp_to_domain(fake, new, PARAM_FLOOR)
            objective = expected_w(net, Poisson(lam))
        except (NumericError, FloatingPointError) as exc:
            curve.aborted[(name, seed)] = f"epoch {epoch}: {exc}"
            break
        curve.rows.append(CurveRow(seed, epoch, name, lam, objective, loss))
    return curve


def _toy_seed(cfg: ExperimentConfig, name: str, seed: int) -> LearningCurve:
    curve = LearningCurve()
    rng = RngStream(seed)
    cost = quadratic(1.0)
    p = clamp_to_domain(Bernoulli(0.5), cfg.init_param, PARAM_FLOOR)
    baseline = MovingAverageBaseline() if cfg.reinforce_baseline and name == "reinforce" else None
    for epoch in range(1, cfg.epochs + 1):
        try:
            dist = Bernoulli(p)
            g = generator_step(name, dist, cost, cfg, rng.child(epoch), baseline)
            if baseline is not None:
                baseline.update(1.0 - p)
            new = p - cfg.gen_lr * float(g[0])
            if not np.isfinite(new):
                raise NumericError(f"non-finite p at epoch {epoch}")
            p = clamp_to_domain(dist, new, PARAM_FLOOR)
        except (NumericError, FloatingPointError) as exc:
            curve.aborted[(name, seed)] = f"epoch {epoch}: {exc}"
            break
        curve.rows.append(CurveRow(seed, epoch, name, p, 1.0 - p))
    return curve


def _run_one(args):
    kind, cfg, name, seed = args
    return (_gan_seed if kind == "gan" else _toy_seed)(cfg, name, seed)


def _run_grid(kind: str, cfg: ExperimentConfig):
    jobs = [(kind, cfg, name, seed) for name in cfg.estimators for seed in cfg.seeds]
    curve = LearningCurve()
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(_run_one, jobs))
    else:
        parts = [_run_one(j) for j in jobs]
    for part in parts:
        curve.extend(part)
    stats = [summarize(name, curve.final_params(name).values()) for name in cfg.estimators]
    return curve, stats


def run_poisson_gan(cfg: ExperimentConfig):
    """Alternating discriminator / generator training; returns (curve, stats)."""
    return _run_grid("gan", cfg)


def run_toy_bernoulli(cfg: ExperimentConfig):
    """Minimize E_{Bern(p)}[(z - 1)^2] = 1 - p with each estimator; returns (curve, stats)."""
    return _run_grid("toy", cfg)


def gan_snapshot(cfg: ExperimentConfig, seed: int | None = None):
    """(fake distribution, generator cost) with a discriminator trained at a fixed lambda."""
    seed = cfg.seeds[0] if seed is None else seed
    rng = RngStream(seed)
    fake = Poisson(cfg.snapshot_param)
    net, state = _new_discriminator(cfg, rng.child(0))
    net, _, _ = train_discriminator(net, state, Poisson(cfg.lambda_true), fake, cfg,
                                    cfg.snapshot_train_steps, rng.child(1))
    return fake, discriminator_cost(net)


def variance_bench(dist, cost: CostFunction, cfg: ExperimentConfig):
    """Paired-seed bias and spread of each estimator at a fixed (dist, f).

    Draw ``j`` of every estimator uses the same stream, so the comparison is
    paired. All estimates are in parameter units (see ``parameter_step``).
    """
    target = float(exact_gradient_oracle(dist, cost).grad[0])
    streams = [RngStream(s, 1).child(r) for s in cfg.seeds for r in range(cfg.repeats)]
    out = {}
    for name in cfg.estimators:
        vals = np.array([generator_step(name, dist, cost, cfg, r)[0] for r in streams])
        out[name] = (summarize(name, vals, float(vals.mean() - target)), vals)
    return out


def run_variance_bench(cfg: ExperimentConfig):
    """Estimator spread at the Poisson GAN snapshot; returns a list of SummaryStats."""
    dist, cost = gan_snapshot(cfg)
    return [s for s, _ in variance_bench(dist, cost, cfg).values()]


def bench_csv(stats) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_HEADER)
    for s in stats:
        w.writerow([s.estimator, _fmt(s.mean), _fmt(s.std), _fmt(s.bias), s.n])
    return buf.getvalue()


# ---------------------------------------------------------------- CLI

def parse_seeds(text: str) -> tuple:
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        a, b = int(lo), int(hi)
        if b < a:
            raise ValueError(f"empty seed range {text!r}")
        return tuple(range(a, b + 1))
    return tuple(int(s) for s in text.split(",") if s.strip())


def parse_bandwidth(text: str) -> float | None:
    return None if text.strip() == "median" else float(text)


def parse_estimators(text: str) -> tuple:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# config key -> (ExperimentConfig field, parser)
_KEYS = {
    "experiment": ("experiment", str),
    "estimator": ("estimators", parse_estimators),
    "seeds": ("seeds", parse_seeds),
    "epochs": ("epochs", int),
    "n-samples": ("n_samples", int),
    "epsilon": ("epsilon", float),
    "gen-lr": ("gen_lr", float),
    "disc-lr": ("disc_lr", float),
    "disc-steps": ("disc_steps", int),
    "bandwidth": ("bandwidth", parse_bandwidth),
    "lambda-true": ("lambda_true", float),
    "init-param": ("init_param", float),
    "out": ("out", str),
    "disc-weight-decay": ("disc_weight_decay", float),
    "disc-beta2": ("disc_beta2", float),
    "disc-batch": ("disc_batch", int),
    "control-variate": ("control_variate", parse_bool),
    "reinforce-baseline": ("reinforce_baseline", parse_bool),
    "repeats": ("repeats", int),
    "snapshot-param": ("snapshot_param", float),
    "snapshot-train-steps": ("snapshot_train_steps", int),
    "workers": ("workers", int),
}


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` file with ``#`` comments; keys as in the CLI flags."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key == "config":
            raise ConfigError(f"{path}:{n}: nested config files are not supported")
        if key not in _KEYS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        values[key] = value
    return values


def build_config(values: dict) -> ExperimentConfig:
    """ExperimentConfig from raw string values keyed like the CLI flags."""
    kwargs = {}
    for key, text in values.items():
        name, parse = _KEYS[key]
        try:
            kwargs[name] = parse(text)
        except ValueError as exc:
            raise ConfigError(f"bad value for --{key}: {text!r} ({exc})") from exc
    if "experiment" not in kwargs:
        raise ConfigError("--experiment is required")
    if kwargs["experiment"] == "toy_bernoulli":
        kwargs = {**TOY_DEFAULTS, **kwargs}
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:  # pragma: no cover - keys are validated above
        raise ConfigError(str(exc)) from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pwgf", description="Projected Wasserstein gradient flow experiments.")
    for key in _KEYS:
        p.add_argument(f"--{key}", dest=key.replace("-", "_"), default=None, metavar="VALUE")
    p.add_argument("--config", default=None, metavar="PATH")
    return p


def config_from_argv(argv) -> ExperimentConfig:
    args = make_parser().parse_args(argv)
    values = read_config_file(args.config) if args.config else {}
    for key in _KEYS:
        v = getattr(args, key.replace("-", "_"))
        if v is not None:
            values[key] = v
    return build_config(values)


def _write(path: str, text: str):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path!r}: {exc}") from exc


def cli_main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = config_from_argv(argv)
        if cfg.experiment == "variance_bench":
            stats = run_variance_bench(cfg)
            curve = None
        else:
            run = run_poisson_gan if cfg.experiment == "poisson_gan" else run_toy_bernoulli
            curve, stats = run(cfg)
        if cfg.out:
            _write(cfg.out, bench_csv(stats) if curve is None else curve.to_csv())
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(make_parser().format_usage(), end="", file=sys.stderr)
        return EXIT_CONFIG
    for s in stats:
        print(s.line())
    if curve is not None and curve.aborted:
        for (name, seed), msg in sorted(curve.aborted.items()):
            print(f"aborted {name} seed {seed}: {msg}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK
