"""Command line interface.

Commands: bound | estimate | mc-verify | lazy | sweep.  Every output file is
CSV with a comment header embedding the library version and the full resolved
run configuration, so any result can be reproduced from the file alone.
Exit codes: 0 success, 2 validation error, 3 divergence flag raised.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .accountant import (
    DnnBoundInputs,
    KLConstant,
    dnn_drift_bound,
    expected_grad_norm_init,
    expected_output_sqnorm_init,
    gradient_norm_constant_B,
    kl_bound_linearized,
    kl_to_dp_delta,
    lazy_R_bound,
    table_closed_form_B,
)
from .data import Dataset, Neighbor, enumerate_neighbors, load_csv, synth_sphere
from .estimator import (
    DnnModel,
    LinearizedModel,
    TrainConfig,
    mc_grad_norm_at_init,
    mc_linearized_grad_diff,
    mc_output_sqnorm,
    noisy_gd_step,
    replay_worst,
    run_kl_estimation,
    run_streams,
)
from .linearized import (
    build_features,
    gram_analysis,
    lazy_solution,
    lin_empirical_grad,
    lin_empirical_loss,
)
from .network import LossKind, NetArch, ParamVector, init_betas, sample_init
from .numerics import RngStream

SCHEMES = ("lecun", "he", "ntk", "xavier")

# Fixed substream indices, disjoint from the run indices used by the trainer.
_DATA_CHILD = 1 << 20
_POOL_CHILD = _DATA_CHILD + 1
_INIT_CHILD = _DATA_CHILD + 2


@dataclass
class RunConfig:
    """Resolved options of one CLI invocation; serialized into every output."""

    command: str = ""
    scheme: str = "lecun"
    d: int = 16
    width: int = 64
    depth: int = 3
    outputs: int = 1
    eta: float = 0.01
    steps: int = 100
    sigma2: float = 0.01
    runs: int = 6
    seed: int = 0
    neighbor: str = "remove"
    kl_constant: str = "paper"
    data: str = "synth:32"
    out: str | None = None
    time: float | None = None
    n: int | None = None
    x_sqnorm: float | None = None
    beta_smooth: float | None = None
    c_grad: float | None = None
    rank_mt: int | None = None
    e_delta0: float | None = None
    e_grad0: float | None = None
    samples: int = 4000
    mc_n: int = 32
    ridge: float | None = None
    pool_size: int = 8
    record_every: int = 1
    cap: int = 256
    replay_sigma2: float | None = None
    label_column: str = "label"
    widths: str = "16,64,256"
    depths: str = "3"
    metric: str = "analytic"
    linearize: bool = False

    def validate(self) -> None:
        if min(self.d, self.width, self.outputs) < 1 or self.depth < 2:
            raise ValueError("need d, width, outputs >= 1 and depth >= 2")
        if self.eta <= 0 or self.sigma2 <= 0:
            raise ValueError("eta and sigma2 must be positive")
        if self.steps < 0 or self.runs < 1 or self.samples < 2:
            raise ValueError("steps must be >= 0, runs >= 1, samples >= 2")
        if self.pool_size < 1 or self.cap < 1 or self.record_every < 1:
            raise ValueError("pool-size, cap and record-every must be positive")
        if self.scheme not in SCHEMES + ("all",):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.neighbor not in ("replace", "remove", "add"):
            raise ValueError(f"unknown neighbor notion {self.neighbor!r}")
        if self.kl_constant not in ("paper", "exact"):
            raise ValueError(f"unknown KL constant convention {self.kl_constant!r}")
        if self.replay_sigma2 is not None and self.replay_sigma2 <= 0:
            raise ValueError("replay sigma2 must be positive")

    def header_items(self) -> list[tuple[str, str]]:
        items = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                s = ""
            elif isinstance(v, bool):
                s = "1" if v else "0"
            elif isinstance(v, float):
                s = repr(v)
            else:
                s = str(v)
            items.append((f.name, s))
        return sorted(items)

    @property
    def convention(self) -> KLConstant:
        return KLConstant.PAPER if self.kl_constant == "paper" else KLConstant.EXACT

    @property
    def horizon(self) -> float:
        return self.time if self.time is not None else self.eta * self.steps


_BOOL_FIELDS = {"linearize"}


def _coerce_field(name: str, raw: str):
    """Convert a config-file string to the RunConfig field type."""
    typed = {f.name: f for f in fields(RunConfig)}
    if name not in typed:
        raise ValueError(f"unknown config key {name!r}")
    if raw == "":
        return None
    if name in _BOOL_FIELDS:
        if raw not in ("0", "1", "true", "false"):
            raise ValueError(f"bad boolean for {name!r}: {raw!r}")
        return raw in ("1", "true")
    for probe in (int, float):
        default = typed[name].default
        if isinstance(default, probe) and not isinstance(default, bool):
            return probe(raw)
    # optional numerics default to None; infer from the known numeric fields
    if name in ("time", "x_sqnorm", "beta_smooth", "c_grad", "e_delta0",
                "e_grad0", "ridge", "replay_sigma2"):
        return float(raw)
    if name in ("n", "rank_mt"):
        return int(raw)
    return raw


def load_config_file(path: str) -> dict:
    """Read flat key=value lines; '#' starts a comment, blank lines ignored.

    Files written by this tool (first line `# klpriv-version=...`) can be
    passed back directly: the embedded `# key=value` header is the config
    and the data rows are skipped.
    """
    out = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    artifact = bool(lines) and lines[0].startswith("# klpriv-version=")
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        if artifact:
            if not line.startswith("#"):
                continue
            line = line.lstrip("# ")
            if "=" not in line:
                continue
        elif line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        if key in ("klpriv_version", "command"):
            continue
        out[key] = _coerce_field(key, raw.strip())
    return out


# ---------------------------------------------------------------------------
# Output writing
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_table(cfg: RunConfig, columns: list[str], rows: list[tuple],
                 out: str | None) -> None:
    lines = [f"# klpriv-version={__version__}"]
    lines += [f"# {k}={v}" for k, v in cfg.header_items()]
    lines.append(",".join(columns))
    lines += [",".join(_fmt(c) for c in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# Shared resolution helpers
# ---------------------------------------------------------------------------

def _schemes(cfg: RunConfig, allow_all: bool = True) -> list[str]:
    if cfg.scheme == "all":
        if not allow_all:
            raise ValueError(f"{cfg.command} needs a single scheme, not 'all'")
        return list(SCHEMES)
    return [cfg.scheme]


def _resolve_data(cfg: RunConfig) -> tuple[Dataset, Dataset | None]:
    """Dataset and (when the notion needs one) a held-out candidate pool."""
    notion = Neighbor(cfg.neighbor)
    need_pool = notion is not Neighbor.REMOVE_ONE
    spec = cfg.data
    if spec.startswith("synth:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad data spec {spec!r}; expected synth:<n> or csv:<path>")
        if n < 1:
            raise ValueError("synthetic dataset size must be positive")
        if cfg.outputs != 1:
            raise ValueError("synthetic data is binary; multi-output runs need csv data")
        data = synth_sphere(n, cfg.d, RngStream(cfg.seed).child(_DATA_CHILD))
        pool = None
        if need_pool:
            pool = synth_sphere(cfg.pool_size, cfg.d,
                                RngStream(cfg.seed).child(_POOL_CHILD))
        return data, pool
    if spec.startswith("csv:"):
        full = load_csv(spec.split(":", 1)[1], cfg.label_column)
        if not need_pool:
            return full, None
        if full.n <= cfg.pool_size:
            raise ValueError("dataset too small to hold out a candidate pool")
        data = Dataset(X=full.X[:-cfg.pool_size], Y=full.Y[:-cfg.pool_size])
        pool = Dataset(X=full.X[-cfg.pool_size:], Y=full.Y[-cfg.pool_size:])
        return data, pool
    raise ValueError(f"bad data spec {spec!r}; expected synth:<n> or csv:<path>")


def _dataset_size(cfg: RunConfig) -> int:
    if cfg.n is not None:
        return cfg.n
    if cfg.data.startswith("synth:"):
        return int(cfg.data.split(":", 1)[1])
    raise ValueError("--n is required when the data spec is a csv file")


def _sphere_input(d: int, seed: int) -> np.ndarray:
    x = RngStream(seed).child(_DATA_CHILD).generator().standard_normal(d)
    return x * (math.sqrt(d) / np.linalg.norm(x))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_bound(cfg: RunConfig) -> int:
    """Analytic bounds for each requested scheme."""
    n = _dataset_size(cfg)
    T = cfg.horizon
    rows = []
    for scheme in _schemes(cfg):
        arch = NetArch.uniform(cfg.d, cfg.width, cfg.depth, cfg.outputs)
        betas = init_betas(scheme, arch)
        B = gradient_norm_constant_B(arch, betas)
        kl = kl_bound_linearized(B, T, n, cfg.sigma2, cfg.convention)
        rows.append((scheme, "B", B))
        rows.append((scheme, "table_B", table_closed_form_B(scheme, cfg.d, cfg.width,
                                                            cfg.depth, cfg.outputs)))
        rows.append((scheme, "kl_bound_linearized", kl))
        rows.append((scheme, "dp_delta", kl_to_dp_delta(kl)))
        if cfg.x_sqnorm is not None:
            rows.append((scheme, "expected_grad_norm_init",
                         expected_grad_norm_init(arch, betas, cfg.x_sqnorm)))
            rows.append((scheme, "expected_output_sqnorm_init",
                         expected_output_sqnorm_init(arch, betas, cfg.x_sqnorm)))
        if cfg.beta_smooth is not None:
            c = cfg.c_grad if cfg.c_grad is not None else math.sqrt(B)
            inputs = DnnBoundInputs(
                T=T, n=n, sigma2=cfg.sigma2, beta_smooth=cfg.beta_smooth,
                c_grad=c,
                rank_mt=cfg.rank_mt if cfg.rank_mt is not None else min(n, arch.num_params),
                e_delta0=cfg.e_delta0 if cfg.e_delta0 is not None else 4.0 * B / n ** 2,
                e_grad0=cfg.e_grad0 if cfg.e_grad0 is not None else B)
            notes = tuple(f"{k}={'user' if v is not None else 'analytic'}"
                          for k, v in (("c_grad", cfg.c_grad), ("rank_mt", cfg.rank_mt),
                                       ("e_delta0", cfg.e_delta0), ("e_grad0", cfg.e_grad0)))
            report = dnn_drift_bound(inputs, cfg.convention, notes=notes)
            rows.append((scheme, "kl_bound_dnn", report.value))
            rows.append((scheme, "dnn_integral", report.integral))
            for term, val in report.terms.items():
                rows.append((scheme, f"dnn_term_{term}", val))
            rows.append((scheme, "dnn_exponential_regime",
                         1 if report.exponential_regime else 0))
    _write_table(cfg, ["scheme", "metric", "value"], rows, cfg.out)
    return 0


def _estimate_result(cfg: RunConfig, scheme: str):
    data, pool = _resolve_data(cfg)
    arch = NetArch.uniform(data.d, cfg.width, cfg.depth, cfg.outputs)
    neighbors = enumerate_neighbors(data, Neighbor(cfg.neighbor), pool=pool,
                                    cap=cfg.cap, seed=cfg.seed)
    if cfg.linearize:
        W0 = sample_init(arch, init_betas(scheme, arch),
                         RngStream(cfg.seed).child(_INIT_CHILD))
        model = LinearizedModel(build_features(W0, data.X))
    else:
        model = DnnModel(arch, scheme)
    tc = TrainConfig(eta=cfg.eta, steps=cfg.steps, sigma2=cfg.sigma2, runs=cfg.runs,
                     seed=cfg.seed, kl_constant=cfg.convention,
                     record_every=cfg.record_every)
    return run_kl_estimation(model, data, neighbors, tc)


def _trace_rows(result) -> list[tuple]:
    rows = [(0, 0.0, 0.0, 0)]
    for idx, step in enumerate(result.recorded_steps):
        diverged = any(t.diverged and not np.isfinite(t.cumulative_worst[idx])
                       for t in result.traces)
        rows.append((int(step), float(result.worst_mean[idx]),
                     float(result.worst_std[idx]), 1 if diverged else 0))
    return rows


def cmd_estimate(cfg: RunConfig) -> int:
    """Empirical worst-case KL trace for one scheme."""
    scheme = _schemes(cfg, allow_all=False)[0]
    result = _estimate_result(cfg, scheme)
    _write_table(cfg, ["epochs", "kl_means", "kl_stds", "diverged"],
                 _trace_rows(result), cfg.out)
    if cfg.out is not None:
        detail = [(r, j, float(t.cumulative_per_neighbor[j]))
                  for r, t in enumerate(result.traces)
                  for j in range(t.cumulative_per_neighbor.size)]
        _write_table(cfg, ["run", "neighbor", "kl_final"], detail,
                     cfg.out + ".neighbors.csv")
        if cfg.replay_sigma2 is not None:
            worst = np.stack([replay_worst(t, sigma2=cfg.replay_sigma2)
                              for t in result.traces])
            rows = [(0, 0.0, 0.0, 0)]
            with np.errstate(invalid="ignore"):
                means = worst.mean(axis=0)
                stds = (worst.std(axis=0, ddof=1) if cfg.runs > 1
                        else np.zeros(worst.shape[1]))
            for idx, step in enumerate(result.recorded_steps):
                rows.append((int(step), float(means[idx]), float(stds[idx]),
                             0 if np.isfinite(means[idx]) else 1))
            _write_table(cfg, ["epochs", "kl_means", "kl_stds", "diverged"],
                         rows, cfg.out + ".replay.csv")
    elif cfg.replay_sigma2 is not None:
        raise ValueError("--replay-sigma2 needs --out to name the replay file")
    return 3 if result.diverged_any else 0


def cmd_mc_verify(cfg: RunConfig) -> int:
    """Monte Carlo checks of the initialization moments against closed forms."""
    rows = []
    base = RngStream(cfg.seed)
    x = _sphere_input(cfg.d, cfg.seed)
    for si, scheme in enumerate(_schemes(cfg)):
        arch = NetArch.uniform(cfg.d, cfg.width, cfg.depth, cfg.outputs)
        checks = [
            ("grad_norm_init", mc_grad_norm_at_init(
                arch, scheme, x, cfg.samples, base.child(3 * si))),
            ("output_sqnorm_init", mc_output_sqnorm(
                arch, scheme, x, cfg.samples, base.child(3 * si + 1))),
        ]
        if cfg.outputs == 1:
            xb = _sphere_input(cfg.d, cfg.seed + 1)
            checks.append(("linearized_grad_diff", mc_linearized_grad_diff(
                arch, scheme, (x, 1.0), (xb, -1.0), cfg.mc_n, cfg.samples,
                base.child(3 * si + 2))))
        for name, rep in checks:
            rows.append((scheme, name, rep.mean, rep.stderr, rep.samples,
                         rep.reference, rep.z_score, 1 if rep.violation else 0))
            status = "FAIL" if rep.violation else "ok"
            print(f"[mc-verify] {scheme} {name}: mean={rep.mean:.6g} "
                  f"ref={rep.reference:.6g} z={rep.z_score:+.2f} {status}")
    _write_table(cfg, ["scheme", "check", "mean", "stderr", "samples",
                       "reference", "z", "violation"], rows, cfg.out)
    return 0


def cmd_lazy(cfg: RunConfig) -> int:
    """Interpolator diagnostics and an optional linearized training run."""
    scheme = _schemes(cfg, allow_all=False)[0]
    if cfg.outputs != 1:
        raise ValueError("the lazy construction needs a single output")
    data, _ = _resolve_data(cfg)
    arch = NetArch.uniform(data.d, cfg.width, cfg.depth, cfg.outputs)
    betas = init_betas(scheme, arch)
    W0 = sample_init(arch, betas, RngStream(cfg.seed).child(_INIT_CHILD))
    features = build_features(W0, data.X)
    gram = gram_analysis(features)
    sol = lazy_solution(features, data.Y, ridge=cfg.ridge)
    target = 1.0 / data.n ** 2
    rows = [
        ("lambda_min", gram.lambda_min),
        ("rank_M0", gram.rank),
        ("R", sol.R),
        ("R_bound_order_of_magnitude", lazy_R_bound(arch, betas, data.n)),
        ("achieved_loss", sol.achieved_loss),
        ("loss_target", target),
        ("below_target", 1 if sol.achieved_loss < target else 0),
        ("alpha_gap", sol.alpha_gap),
        ("ridge_used", sol.ridge_used),
    ]
    if cfg.steps > 0:
        # averaged-iterate excess risk of noisy GD on the linearized model,
        # measured against the near-optimal interpolator
        T = cfg.eta * cfg.steps
        _, noise_stream = run_streams(cfg.seed, 0)
        W = W0.copy()
        avg = np.zeros_like(W.flat)
        for k in range(cfg.steps):
            g = lin_empirical_grad(features, W, data.Y, LossKind.LOGISTIC_SINGLE)
            W = noisy_gd_step(W, g, cfg.eta, cfg.sigma2, noise_stream.child(k))
            avg += W.flat
        W_avg = ParamVector(arch, avg / cfg.steps)
        avg_loss = lin_empirical_loss(features, W_avg, data.Y, LossKind.LOGISTIC_SINGLE)
        bound = sol.alpha_gap + sol.R / (2.0 * T) + cfg.sigma2 * gram.rank / 2.0
        rows.append(("averaged_iterate_loss", avg_loss))
        rows.append(("excess_vs_interpolator", avg_loss - sol.achieved_loss))
        rows.append(("risk_bound", bound))
    _write_table(cfg, ["metric", "value"], rows, cfg.out)
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    """Grid over schemes, widths and depths in long format."""
    try:
        widths = [int(w) for w in cfg.widths.split(",") if w]
        depths = [int(v) for v in cfg.depths.split(",") if v]
    except ValueError:
        raise ValueError("widths and depths must be comma-separated integers")
    if not widths or not depths:
        raise ValueError("need at least one width and one depth")
    if cfg.metric not in ("analytic", "empirical", "both"):
        raise ValueError(f"unknown sweep metric {cfg.metric!r}")
    n = _dataset_size(cfg)
    rows = []
    any_diverged = False
    for scheme in _schemes(cfg):
        for m in widths:
            for L in depths:
                try:
                    if cfg.metric in ("analytic", "both"):
                        arch = NetArch.uniform(cfg.d, m, L, cfg.outputs)
                        B = gradient_norm_constant_B(arch, init_betas(scheme, arch))
                        epochs = list(range(0, cfg.steps + 1, cfg.record_every))
                        if epochs[-1] != cfg.steps:
                            epochs.append(cfg.steps)
                        for step in epochs:
                            kl = kl_bound_linearized(B, cfg.eta * step, n, cfg.sigma2,
                                                     cfg.convention) if step else 0.0
                            rows.append((scheme, m, L, step, "kl_bound", kl))
                    if cfg.metric in ("empirical", "both"):
                        cell = RunConfig(**{**cfg.__dict__, "scheme": scheme,
                                            "width": m, "depth": L})
                        result = _estimate_result(cell, scheme)
                        rows.append((scheme, m, L, 0, "kl_mean", 0.0))
                        rows.append((scheme, m, L, 0, "kl_std", 0.0))
                        for idx, step in enumerate(result.recorded_steps):
                            rows.append((scheme, m, L, int(step), "kl_mean",
                                         float(result.worst_mean[idx])))
                            rows.append((scheme, m, L, int(step), "kl_std",
                                         float(result.worst_std[idx])))
                        if result.diverged_any:
                            any_diverged = True
                            rows.append((scheme, m, L, int(cfg.steps), "diverged", 1.0))
                except (ValueError, FloatingPointError) as exc:
                    rows.append((scheme, m, L, 0, "error", math.nan))
                    print(f"[sweep] cell scheme={scheme} width={m} depth={L} "
                          f"failed: {exc}", file=sys.stderr)
    _write_table(cfg, ["scheme", "width", "depth", "epoch", "metric", "value"],
                 rows, cfg.out)
    return 3 if any_diverged else 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, overrides: dict) -> None:
    def dft(name, fallback):
        return overrides.get(name, fallback)

    p.add_argument("--config", default=None, help="key=value file with defaults")
    p.add_argument("--scheme", default=dft("scheme", "lecun"),
                   choices=SCHEMES + ("all",))
    p.add_argument("--d", type=int, default=dft("d", 16))
    p.add_argument("--width", type=int, default=dft("width", 64))
    p.add_argument("--depth", type=int, default=dft("depth", 3))
    p.add_argument("--outputs", type=int, default=dft("outputs", 1))
    p.add_argument("--eta", type=float, default=dft("eta", 0.01))
    p.add_argument("--steps", type=int, default=dft("steps", 100))
    p.add_argument("--sigma2", type=float, default=dft("sigma2", 0.01))
    p.add_argument("--runs", type=int, default=dft("runs", 6))
    p.add_argument("--seed", type=int, default=dft("seed", 0))
    p.add_argument("--neighbor", default=dft("neighbor", "remove"),
                   choices=("replace", "remove", "add"))
    p.add_argument("--kl-constant", dest="kl_constant",
                   default=dft("kl_constant", "paper"), choices=("paper", "exact"))
    p.add_argument("--data", default=dft("data", "synth:32"),
                   help="synth:<n> or csv:<path>")
    p.add_argument("--out", default=dft("out", None))
    p.add_argument("--label-column", dest="label_column",
                   default=dft("label_column", "label"))
    p.add_argument("--pool-size", dest="pool_size", type=int,
                   default=dft("pool_size", 8))
    p.add_argument("--record-every", dest="record_every", type=int,
                   default=dft("record_every", 1))
    p.add_argument("--cap", type=int, default=dft("cap", 256))


def build_parser(overrides: dict | None = None) -> argparse.ArgumentParser:
    overrides = overrides or {}
    parser = argparse.ArgumentParser(prog="klpriv", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="analytic KL bounds")
    _add_common(p, overrides)
    p.add_argument("--time", type=float, default=overrides.get("time"))
    p.add_argument("--n", type=int, default=overrides.get("n"))
    p.add_argument("--x-sqnorm", dest="x_sqnorm", type=float,
                   default=overrides.get("x_sqnorm"))
    p.add_argument("--beta-smooth", dest="beta_smooth", type=float,
                   default=overrides.get("beta_smooth"))
    p.add_argument("--c-grad", dest="c_grad", type=float,
                   default=overrides.get("c_grad"))
    p.add_argument("--rank-mt", dest="rank_mt", type=int,
                   default=overrides.get("rank_mt"))
    p.add_argument("--e-delta0", dest="e_delta0", type=float,
                   default=overrides.get("e_delta0"))
    p.add_argument("--e-grad0", dest="e_grad0", type=float,
                   default=overrides.get("e_grad0"))

    p = sub.add_parser("estimate", help="empirical worst-case KL trace")
    _add_common(p, overrides)
    p.add_argument("--replay-sigma2", dest="replay_sigma2", type=float,
                   default=overrides.get("replay_sigma2"))
    p.add_argument("--linearize", action="store_true",
                   default=bool(overrides.get("linearize", False)))

    p = sub.add_parser("mc-verify", help="Monte Carlo moment checks")
    _add_common(p, overrides)
    p.add_argument("--samples", type=int, default=overrides.get("samples", 4000))
    p.add_argument("--mc-n", dest="mc_n", type=int, default=overrides.get("mc_n", 32))

    p = sub.add_parser("lazy", help="interpolator diagnostics")
    _add_common(p, overrides)
    p.add_argument("--ridge", type=float, default=overrides.get("ridge"))

    p = sub.add_parser("sweep", help="scheme/width/depth grid")
    _add_common(p, overrides)
    p.add_argument("--widths", default=overrides.get("widths", "16,64,256"))
    p.add_argument("--depths", default=overrides.get("depths", "3"))
    p.add_argument("--metric", default=overrides.get("metric", "analytic"),
                   choices=("analytic", "empirical", "both"))
    p.add_argument("--n", type=int, default=overrides.get("n"))
    return parser


_COMMANDS = {
    "bound": cmd_bound,
    "estimate": cmd_estimate,
    "mc-verify": cmd_mc_verify,
    "lazy": cmd_lazy,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    try:
        overrides = load_config_file(known.config) if known.config else {}
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    parser = build_parser(overrides)
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    kwargs = {f.name: getattr(ns, f.name) for f in fields(RunConfig)
              if hasattr(ns, f.name)}
    cfg = RunConfig(**kwargs)
    try:
        cfg.validate()
        return _COMMANDS[cfg.command](cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
