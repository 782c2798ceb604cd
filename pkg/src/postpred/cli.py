"""Command-line front end.

    postpred predict      --model BernoulliUniform --data 1
    postpred kernel       --matrix two_by_two_kernel.txt
    postpred reconcile    --model PoissonGamma --hyper lam=1 --data 2,0,3
    postpred risk         --model ExpGamma --loss SquaredTV,L1Squared --n 1,5,20 --reps 10000 --seed 1
    postpred consistency  --model NormalNormal --loss L1 --n-grid 1,5,20,200 --reps 2000 --seed 1

Any setting can come from a YAML file given with ``--config``; flags
override the file.  Exit status: 0 success, 1 run aborted, 2 invalid
configuration, 3 dominance check failed under ``--assert-dominance``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import kernels as K
from . import risk as R
from .models import DataError, make_model, predictive
from .oracle import reconcile

COMMANDS = ("predict", "kernel", "reconcile", "risk", "consistency")
FORMATS = ("csv", "json")
BUNDLED_KERNEL = "bundled:two_by_two_kernel.txt"

EXIT_OK, EXIT_ABORT, EXIT_CONFIG, EXIT_DOMINANCE = 0, 1, 2, 3


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    command: str
    family: str = "BernoulliUniform"
    hyper: dict = field(default_factory=dict)
    data: list = field(default_factory=list)
    loss: list = field(default_factory=lambda: ["SquaredTV"])
    estimators: list = field(default_factory=list)
    n: list = field(default_factory=lambda: [1])
    n_grid: list = field(default_factory=list)
    reps: int | None = None
    seed: int | None = None
    out: str | None = None
    format: str | None = None
    assert_dominance: bool = False
    grid_size: int = 1024
    workers: int = 1
    matrix: str | None = None
    prior: list | None = None

    def to_yaml(self) -> str:
        d = asdict(self)
        model = {"family": d.pop("family"), "hyper": d.pop("hyper"), "data": d.pop("data")}
        ordered = {"command": d.pop("command"), "model": model, **d}
        return yaml.safe_dump(ordered, sort_keys=False)

    @classmethod
    def from_mapping(cls, raw: dict) -> RunConfig:
        raw = dict(raw)
        model = raw.pop("model", None) or {}
        if not isinstance(model, dict):
            raise ConfigError("model", "expected a mapping with family, hyper and data")
        for key in ("family", "hyper", "data"):
            if key in model:
                raw[key] = model[key]
        unknown = set(raw) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration key")
        if "command" not in raw:
            raise ConfigError("command", f"missing; choose from {', '.join(COMMANDS)}")
        return cls(**raw)

    def validate(self) -> RunConfig:
        if self.command not in COMMANDS:
            raise ConfigError("command", f"{self.command!r} is not one of {', '.join(COMMANDS)}")
        if self.format is not None and self.format not in FORMATS:
            raise ConfigError("format", f"{self.format!r} is not one of {', '.join(FORMATS)}")
        if not isinstance(self.hyper, dict):
            raise ConfigError("hyper", "expected key=value pairs")
        for name in ("n", "n_grid", "loss", "estimators", "data"):
            if not isinstance(getattr(self, name), list):
                raise ConfigError(name, "expected a list")
        if self.command in ("risk", "consistency"):
            if self.seed is None:
                raise ConfigError("seed", f"required for the stochastic command {self.command!r}")
            if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
                raise ConfigError("seed", "must be an integer in [0, 2**64)")
            if self.reps is None or not isinstance(self.reps, int) or self.reps < 2:
                raise ConfigError("reps", "must be an integer >= 2")
            if not self.loss:
                raise ConfigError("loss", "at least one loss is required")
            for text in self.loss:
                try:
                    R.LossKind.parse(str(text))
                except ValueError as exc:
                    raise ConfigError("loss", str(exc)) from None
            for kind in self.estimators:
                if kind not in R.ESTIMATOR_KINDS:
                    raise ConfigError("estimators", f"unknown estimator {kind!r}; choose from {', '.join(R.ESTIMATOR_KINDS)}")
        if self.command == "risk" and (not self.n or any(not isinstance(v, int) or v < 1 for v in self.n)):
            raise ConfigError("n", "sample sizes must be integers >= 1")
        if self.command == "consistency":
            g = self.n_grid
            if not g or any(not isinstance(v, int) or v < 1 for v in g) or any(b <= a for a, b in zip(g, g[1:])):
                raise ConfigError("n_grid", "must be a strictly increasing list of integers >= 1")
        if self.command == "kernel":
            if self.matrix is None:
                raise ConfigError("matrix", "a matrix file is required for 'kernel'")
            if not self.matrix.startswith("bundled:") and not Path(self.matrix).is_file():
                raise ConfigError("matrix", f"file not found: {self.matrix}")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers", "must be an integer >= 1")
        if not isinstance(self.grid_size, int) or self.grid_size < 16:
            raise ConfigError("grid_size", "must be an integer >= 16")
        return self


# --- argument parsing ------------------------------------------------------------


def _numbers(text: str, kind=float) -> list:
    return [kind(tok) for tok in text.replace(" ", "").split(",") if tok]


def _hyper(text: str) -> dict:
    out = {}
    for part in text.split(","):
        if not part.strip():
            continue
        key, sep, value = part.partition("=")
        if not sep:
            raise ConfigError("hyper", f"expected key=value, got {part!r}")
        out[key.strip()] = float(value)
    return out


def _losses(text: str) -> list:
    # commas inside an event descriptor do not separate losses
    out, depth, cur = [], 0, ""
    for ch in text:
        depth += ch in "{("
        depth -= ch in "})]"
        if ch == "," and depth == 0:
            out.append(cur.strip())
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur.strip())
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="postpred", description="Posterior predictive estimation experiments.")
    p.add_argument("--version", action="version", version=f"postpred {__version__}")
    p.add_argument("command", nargs="?", choices=COMMANDS, help="what to run (may come from --config)")
    p.add_argument("--config", help="YAML configuration file; flags override its values")
    p.add_argument("--model", dest="family", help="ExpGamma, NormalNormal, PoissonGamma or BernoulliUniform")
    p.add_argument("--hyper", help="hyperparameters as k=v,... (e.g. lam=1 or mu=0,tau2=1,sigma2=1)")
    p.add_argument("--data", help="observations, comma separated")
    p.add_argument("--loss", help="SquaredTV, L1, L1Squared, SupCDFSquared, SquaredError{atoms} or SquaredError(lo,hi]")
    p.add_argument("--estimators", help="comma-separated estimator kinds (default: all applicable)")
    p.add_argument("--n", help="sample size(s) for 'risk', comma separated")
    p.add_argument("--n-grid", dest="n_grid", help="increasing sample sizes for 'consistency'")
    p.add_argument("--reps", type=int, help="Monte Carlo replicates (>= 2)")
    p.add_argument("--seed", type=int, help="64-bit seed (required by risk and consistency)")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=FORMATS, help="report format (default csv for tables, json otherwise)")
    p.add_argument("--assert-dominance", dest="assert_dominance", action="store_true", default=None,
                   help="exit 3 unless the posterior predictive passes every dominance check")
    p.add_argument("--grid-size", dest="grid_size", type=int, help="quadrature nodes for 'reconcile'")
    p.add_argument("--workers", type=int, help="worker processes for Monte Carlo replicates")
    p.add_argument("--matrix", help=f"kernel matrix file for 'kernel' ({BUNDLED_KERNEL} for the shipped example)")
    p.add_argument("--prior", help="prior weights for 'kernel', comma separated (overrides the file)")
    p.add_argument("--print-config", dest="print_config", action="store_true",
                   help="print the resolved configuration as YAML and exit")
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    raw: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError("config", f"file not found: {path}")
        try:
            loaded = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{path}:{mark.line + 1}" if mark else str(path)
            raise ConfigError("config", f"{where}: {getattr(exc, 'problem', exc)}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config", f"{path}: expected a mapping at top level")
        raw = loaded
    cfg_raw = dict(raw)
    if args.command:
        cfg_raw["command"] = args.command
    cfg = RunConfig.from_mapping(cfg_raw)
    try:
        if args.family is not None:
            cfg.family = args.family
        if args.hyper is not None:
            cfg.hyper = _hyper(args.hyper)
        if args.data is not None:
            cfg.data = _numbers(args.data)
        if args.loss is not None:
            cfg.loss = _losses(args.loss)
        if args.estimators is not None:
            cfg.estimators = [s.strip() for s in args.estimators.split(",") if s.strip()]
        if args.n is not None:
            cfg.n = _numbers(args.n, int)
        if args.n_grid is not None:
            cfg.n_grid = _numbers(args.n_grid, int)
        if args.prior is not None:
            cfg.prior = _numbers(args.prior)
    except ValueError as exc:
        name = getattr(exc, "field", "arguments")
        raise ConfigError(name, str(exc)) from None
    for name in ("reps", "seed", "out", "format", "assert_dominance", "grid_size", "workers", "matrix"):
        value = getattr(args, name)
        if value is not None:
            setattr(cfg, name, value)
    return cfg.validate()


# --- commands ---------------------------------------------------------------------


def _model(cfg: RunConfig):
    try:
        return make_model(cfg.family, **cfg.hyper)
    except TypeError as exc:
        raise ConfigError("hyper", str(exc)) from None
    except ValueError as exc:
        name = "model" if "family" in str(exc) else "hyper"
        raise ConfigError(name, str(exc)) from None


def _table_points(dist, count: int = 41) -> np.ndarray:
    if dist.is_discrete:
        lo, hi = dist.window
        return np.arange(int(lo), int(min(hi, lo + 100)) + 1, dtype=float)
    return dist.ppf(np.linspace(0.001, 0.999, count))


def run_predict(cfg: RunConfig) -> tuple[str, int]:
    model = _model(cfg)
    try:
        pred = predictive(model, cfg.data)
    except DataError as exc:
        raise ConfigError("data", str(exc)) from None
    dist = pred.marginal
    xs = _table_points(dist)
    report = {
        "command": "predict",
        "version": __version__,
        "model": model.to_config(),
        "data": cfg.data,
        "posterior": {"law": pred.posterior.describe(), **pred.posterior.as_dict()},
        "predictive": [
            {"x": float(x), "density": float(pred.pdf(x)), "cdf": float(pred.cdf(x))} for x in xs
        ],
    }
    return json.dumps(report, indent=2) + "\n", EXIT_OK


def _load_kernel(cfg: RunConfig):
    if cfg.matrix.startswith("bundled:"):
        name = cfg.matrix.split(":", 1)[1]
        ref = resources.files("postpred") / "data" / name
        if not ref.is_file():
            raise ConfigError("matrix", f"no bundled file named {name!r}")
        with resources.as_file(ref) as path:
            blocks = K.load_matrix(path)
    else:
        try:
            blocks = K.load_matrix(cfg.matrix)
        except ValueError as exc:
            raise ConfigError("matrix", str(exc)) from None
    try:
        p = K.FiniteKernel(blocks[0], [f"theta{i + 1}" for i in range(blocks[0].shape[0])],
                           [f"w{i + 1}" for i in range(blocks[0].shape[1])])
    except ValueError as exc:
        raise ConfigError("matrix", str(exc)) from None
    weights = cfg.prior
    if weights is None:
        if len(blocks) < 2 or blocks[1].shape[0] != 1:
            raise ConfigError("prior", "give a prior row after a blank line in the matrix file, or use --prior")
        weights = blocks[1][0]
    try:
        q = K.FiniteDist(weights, p.source_labels)
    except ValueError as exc:
        raise ConfigError("prior", str(exc)) from None
    if len(q) != p.shape[0]:
        raise ConfigError("prior", f"{len(q)} weights for {p.shape[0]} kernel rows")
    return p, q


def _fmt_row(values) -> str:
    return "  ".join("undefined" if np.isnan(v) else f"{v:.6f}" for v in values)


def run_kernel(cfg: RunConfig) -> tuple[str, int]:
    p, q = _load_kernel(cfg)
    joint = K.build_joint(p, q)
    marginal = K.prior_predictive(p, q)
    post = K.posterior_kernel(joint)
    pred = K.predictive_kernel(post, p)
    mask = post.defined_mask
    back = K.FiniteDist(marginal.weights[mask] @ post.rows[mask], q.labels)
    round_trip = K.image(q, K.compose(p, post))
    dev_post = float(np.max(np.abs(back.weights - q.weights)))
    dev_pred = float(np.max(np.abs(round_trip.weights - q.weights)))
    ok = dev_post <= K.ROW_TOL and dev_pred <= K.ROW_TOL
    if cfg.format == "json":
        def rows(k):
            return {lab: None if i in k.undefined else k.rows[i].tolist() for i, lab in enumerate(k.source_labels)}
        report = {
            "command": "kernel",
            "version": __version__,
            "prior": q.weights.tolist(),
            "prior_predictive": marginal.weights.tolist(),
            "posterior": rows(post),
            "predictive": rows(pred),
            "prior_recovered_from_posterior": {"max_abs_dev": dev_post, "pass": dev_post <= K.ROW_TOL},
            "prior_recovered_from_predictive": {"max_abs_dev": dev_pred, "pass": dev_pred <= K.ROW_TOL},
        }
        return json.dumps(report, indent=2) + "\n", EXIT_OK if ok else EXIT_ABORT
    lines = [
        "observations: " + "  ".join(p.target_labels),
        "parameters:   " + "  ".join(p.source_labels),
        "prior Q:               " + _fmt_row(q.weights),
        "prior predictive b*_Q: " + _fmt_row(marginal.weights),
        "posterior P* (rows = observations, columns = parameters):",
        *[f"  {lab}: {_fmt_row(post.rows[i])}" for i, lab in enumerate(post.source_labels)],
        "predictive PP* (rows = observations, columns = observations):",
        *[f"  {lab}: {_fmt_row(pred.rows[i])}" for i, lab in enumerate(pred.source_labels)],
        f"(b*_Q)^{{P*}}=Q: {'PASS' if dev_post <= K.ROW_TOL else 'FAIL'} (max deviation {dev_post:.3g})",
        f"Q^{{P*P}}=Q: {'PASS' if dev_pred <= K.ROW_TOL else 'FAIL'} (max deviation {dev_pred:.3g})",
    ]
    return "\n".join(lines) + "\n", EXIT_OK if ok else EXIT_ABORT


def run_reconcile(cfg: RunConfig) -> tuple[str, int]:
    model = _model(cfg)
    try:
        report = reconcile(model, cfg.data, grid_size=cfg.grid_size)
    except DataError as exc:
        raise ConfigError("data", str(exc)) from None
    out = {"command": "reconcile", "version": __version__, "reports": [report.to_dict()]}
    return json.dumps(out, indent=2) + "\n", EXIT_OK


def _estimators(cfg: RunConfig, losses) -> list[str]:
    kinds = cfg.estimators or ["PosteriorPredictive", *R.DEFAULT_COMPETITORS]
    if "PosteriorPredictive" not in kinds:
        kinds = ["PosteriorPredictive", *kinds]
    return kinds


def _risk_json(cfg, model, rows, reports) -> str:
    out = {
        "command": cfg.command,
        "version": __version__,
        "seed": cfg.seed,
        "reps": cfg.reps,
        "model": model.to_config(),
        "rows": [r.as_row() for r in rows],
    }
    if reports is not None:
        out["dominance"] = [
            {"loss": d.loss, "n": d.n, "dominant": d.dominant, "margins": d.margins,
             "ranking": [r.estimator for r in d.rows]}
            for d in reports
        ]
    return json.dumps(out, indent=2) + "\n"


def run_risk(cfg: RunConfig) -> tuple[str, int]:
    model = _model(cfg)
    losses = [R.LossKind.parse(s) for s in cfg.loss]
    kinds = _estimators(cfg, losses)
    rows, reports = [], []
    for n in cfg.n:
        table = R.risk_table(model, kinds, losses, n, cfg.reps, cfg.seed, cfg.workers)
        for loss in losses:
            sub = [r for r in table if r.loss == str(loss)]
            rep = R.dominance_from_rows(sub, str(loss), n)
            reports.append(rep)
            rows.extend(rep.rows)
    failed = [d for d in reports if not d.dominant]
    for d in failed:
        worst = min(d.margins, key=d.margins.get)
        print(f"postpred: dominance check failed for {d.loss} at n={d.n} against {worst} "
              f"(margin {d.margins[worst]:.3g})", file=sys.stderr)
    code = EXIT_DOMINANCE if (failed and cfg.assert_dominance) else EXIT_OK
    if cfg.format == "json":
        return _risk_json(cfg, model, rows, reports), code
    return R.to_csv(rows, R.provenance(cfg.seed, cfg.reps) + f" model={cfg.family}"), code


def run_consistency(cfg: RunConfig) -> tuple[str, int]:
    model = _model(cfg)
    losses = [R.LossKind.parse(s) for s in cfg.loss]
    kinds = cfg.estimators or ["PosteriorPredictive"]
    rows = []
    for n in cfg.n_grid:
        rows.extend(R.risk_table(model, kinds, losses, n, cfg.reps, cfg.seed, cfg.workers))
    rows.sort(key=lambda r: (r.estimator, r.loss, r.n))
    if cfg.format == "json":
        return _risk_json(cfg, model, rows, None), EXIT_OK
    return R.to_csv(rows, R.provenance(cfg.seed, cfg.reps) + f" model={cfg.family}"), EXIT_OK


RUNNERS = {
    "predict": run_predict,
    "kernel": run_kernel,
    "reconcile": run_reconcile,
    "risk": run_risk,
    "consistency": run_consistency,
}


def run(cfg: RunConfig) -> tuple[str, int]:
    return RUNNERS[cfg.command](cfg)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.print_config:
            sys.stdout.write(cfg.to_yaml())
            return EXIT_OK
        text, code = run(cfg)
    except ConfigError as exc:
        print(f"postpred: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except R.RiskAbort as exc:
        print(f"postpred: run aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
