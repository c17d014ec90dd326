"""Batch front-end: verify datasets, compare bounding methods, generate and
train toy models.

Reports are JSON-lines (one record per instance plus one summary record) so
runs can be diffed and replayed; per-instance wall times are kept in memory
and printed to stdout but never serialized, keeping reports byte-identical
across equally-seeded runs.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from .bab import BabConfig, BoundMethod, Falsified, Timeout, Verdict, Verified, verify_instance
from .convexify import AlphaShift, PowerMethodConfig, nonuniform_alpha, power_method_uniform_alpha
from .intervals import Box, ibp_objective_lower
from .modelio import (
    Dataset,
    generate_random_network,
    load_dataset_csv,
    load_model,
    save_model,
    toy_train,
    training_accuracy,
)
from .networks import ConvCcpNetwork, ConvLayerSpec, Network, Objective, forward, lower_conv_network
from .pgd import PgdConfig, lower_bound_alpha, upper_bound

__all__ = ["InstanceRecord", "RunReport", "run_verify", "run_compare", "main"]

_METHODS = ("ibp", "alpha", "alpha-nu")


@dataclass(frozen=True)
class InstanceRecord:
    index: int
    label: int
    predicted: int
    status: str
    classes: tuple[dict, ...]
    wall_time: float


@dataclass(frozen=True)
class RunReport:
    instances: tuple[InstanceRecord, ...]

    def count(self, status: str) -> int:
        return sum(1 for rec in self.instances if rec.status == status)

    @property
    def total(self) -> int:
        return len(self.instances)

    @property
    def clean_accuracy(self) -> float:
        return 1.0 - self.count("misclassified") / self.total if self.total else 0.0

    @property
    def verified_accuracy(self) -> float:
        return self.count("verified") / self.total if self.total else 0.0

    @property
    def upper_bound_accuracy(self) -> float:
        if not self.total:
            return 0.0
        return 1.0 - (self.count("falsified") + self.count("misclassified")) / self.total

    @property
    def mean_time(self) -> float:
        return sum(r.wall_time for r in self.instances) / self.total if self.total else 0.0

    def jsonl(self) -> str:
        """Serialized report; stable key order, no timing fields."""
        lines = []
        for rec in self.instances:
            lines.append(
                json.dumps(
                    {
                        "record": "instance",
                        "index": rec.index,
                        "label": rec.label,
                        "predicted": rec.predicted,
                        "status": rec.status,
                        "classes": list(rec.classes),
                    },
                    separators=(",", ":"),
                )
            )
        lines.append(
            json.dumps(
                {
                    "record": "summary",
                    "instances": self.total,
                    "verified": self.count("verified"),
                    "falsified": self.count("falsified"),
                    "timeouts": self.count("timeout"),
                    "misclassified": self.count("misclassified"),
                    "clean_accuracy": self.clean_accuracy,
                    "verified_accuracy": self.verified_accuracy,
                    "upper_bound_accuracy": self.upper_bound_accuracy,
                },
                separators=(",", ":"),
            )
        )
        return "\n".join(lines) + "\n"


def _class_entry(gamma: int, verdict: Verdict) -> dict:
    if isinstance(verdict, Verified):
        return {"gamma": gamma, "outcome": "verified"}
    if isinstance(verdict, Falsified):
        return {
            "gamma": gamma,
            "outcome": "falsified",
            "margin": float(verdict.margin),
            "counterexample": [float(v) for v in verdict.counterexample],
        }
    if isinstance(verdict, Timeout):
        return {
            "gamma": gamma,
            "outcome": "timeout",
            "lower_bound": float(verdict.best_lb),
            "upper_bound": float(verdict.best_ub),
        }
    raise ValueError(f"unexpected verdict in verification mode: {verdict!r}")


def _as_dense(net) -> Network:
    return lower_conv_network(net) if isinstance(net, ConvCcpNetwork) else net


def run_verify(
    net,
    dataset: Dataset,
    eps: float,
    *,
    bound: str = "alpha",
    time_limit: float = 60.0,
    max_instances: int = 1000,
    seed: int = 0,
    threads: int = 1,
) -> RunReport:
    net = _as_dense(net)
    cfg = BabConfig(
        time_limit=time_limit,
        bound_method=BoundMethod(bound),
        pgd=PgdConfig(seed=seed),
        power=PowerMethodConfig(seed=seed),
        verification_mode=True,
    )
    count = min(len(dataset), max_instances)

    def work(i: int) -> InstanceRecord:
        t0 = time.perf_counter()
        res = verify_instance(net, dataset.features[i], int(dataset.labels[i]), eps, cfg)
        elapsed = time.perf_counter() - t0
        classes = tuple(_class_entry(g, v) for g, v in res.outcomes)
        return InstanceRecord(
            index=i,
            label=int(dataset.labels[i]),
            predicted=res.predicted,
            status=res.status,
            classes=classes,
            wall_time=elapsed,
        )

    if threads <= 1:
        records = [work(i) for i in range(count)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(work, range(count)))
    return RunReport(tuple(records))


def run_compare(
    models: list[tuple[str, Network]],
    eps_values: list[float],
    points: np.ndarray | None = None,
    *,
    n_samples: int = 20,
    seed: int = 0,
) -> list[dict]:
    """Root-box bound-gap comparison: one PGD upper bound and one lower
    bound per method, averaged over sample points.  Returns one row per
    (model, eps, method)."""
    pgd_cfg = PgdConfig(seed=seed)
    power_cfg = PowerMethodConfig(seed=seed)
    rows = []
    for name, net in models:
        net = _as_dense(net)
        if net.output < 2:
            raise ValueError(f"{name}: need at least two classes to form a margin")
        if points is None:
            rng = np.random.default_rng(seed)
            pts = rng.uniform(0.0, 1.0, size=(n_samples, net.input_dim))
        else:
            pts = np.asarray(points, dtype=np.float64)
        for eps in eps_values:
            gaps: dict[str, list[float]] = {m: [] for m in _METHODS}
            for z0 in pts:
                scores = forward(net, z0)
                order = np.argsort(-scores, kind="stable")
                obj = Objective(net, int(order[0]), int(order[1]))
                box = Box.linf_ball(z0, eps, clamp=(0.0, 1.0))
                _, ub = upper_bound(obj, box, pgd_cfg)
                gaps["ibp"].append(ub - ibp_objective_lower(obj, box))
                uniform = AlphaShift.uniform(power_method_uniform_alpha(obj, box, power_cfg))
                gaps["alpha"].append(ub - lower_bound_alpha(obj, box, uniform, pgd_cfg))
                percoord = nonuniform_alpha(obj, box)
                gaps["alpha-nu"].append(ub - lower_bound_alpha(obj, box, percoord, pgd_cfg))
            for method in _METHODS:
                rows.append(
                    {
                        "model": name,
                        "eps": eps,
                        "method": method,
                        "mean_gap": float(np.mean(gaps[method])),
                        "samples": len(pts),
                    }
                )
    return rows


def _echo_summary(report: RunReport) -> None:
    click.echo(f"instances:            {report.total}")
    click.echo(f"clean accuracy:       {report.clean_accuracy:.4f}")
    click.echo(f"verified:             {report.count('verified')}")
    click.echo(f"falsified:            {report.count('falsified')}")
    click.echo(f"timeouts:             {report.count('timeout')}")
    click.echo(f"misclassified:        {report.count('misclassified')}")
    click.echo(f"verified accuracy:    {report.verified_accuracy:.4f}")
    click.echo(f"upper-bound accuracy: {report.upper_bound_accuracy:.4f}")
    click.echo(f"mean time/instance:   {report.mean_time:.3f}s")


@click.group()
def main():
    """Robustness verification for polynomial networks."""


@main.command("verify")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--eps", required=True, type=float, help="l-inf budget around each input")
@click.option("--time-limit", default=60.0, show_default=True, help="seconds per (instance, class)")
@click.option("--bound", type=click.Choice(list(_METHODS)), default="alpha", show_default=True)
@click.option("--max-instances", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--threads", default=1, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None, help="JSONL report")
def cmd_verify(model_path, data_path, eps, time_limit, bound, max_instances, seed, threads, out_path):
    """Verify every dataset row within an l-inf ball around it."""
    try:
        net = load_model(model_path)
        dataset = load_dataset_csv(data_path)
        report = run_verify(
            net,
            dataset,
            eps,
            bound=bound,
            time_limit=time_limit,
            max_instances=max_instances,
            seed=seed,
            threads=threads,
        )
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    if out_path is not None:
        Path(out_path).write_text(report.jsonl())
    _echo_summary(report)


@main.command("compare-bounds")
@click.option("--model", "model_paths", required=True, multiple=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--eps", "eps_values", required=True, multiple=True, type=float)
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--samples", default=20, show_default=True, help="random points if no --data")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None, help="CSV output")
def cmd_compare_bounds(model_paths, eps_values, data_path, samples, seed, out_path):
    """Mean (PGD upper bound - lower bound) per method on root boxes."""
    try:
        models = [(p, load_model(p)) for p in model_paths]
        points = None
        if data_path is not None:
            points = load_dataset_csv(data_path).features[:samples]
        rows = run_compare(models, list(eps_values), points, n_samples=samples, seed=seed)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["model", "eps", "method", "mean_gap", "samples"])
            writer.writeheader()
            writer.writerows(rows)
    for row in rows:
        click.echo(
            f"{row['model']}  eps={row['eps']:g}  {row['method']:<8}  mean gap {row['mean_gap']:.6g}"
        )


def _parse_conv(text: str) -> ConvLayerSpec:
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 8:
        raise ValueError("conv spec needs 8 integers: in_c,in_h,in_w,out_c,k_h,k_w,stride,pad")
    in_c, in_h, in_w, out_c, k_h, k_w, stride, pad = parts
    return ConvLayerSpec(
        in_channels=in_c,
        out_channels=out_c,
        kernel_h=k_h,
        kernel_w=k_w,
        stride=stride,
        padding=pad,
        input_h=in_h,
        input_w=in_w,
    )


@main.command("gen")
@click.option("--kind", type=click.Choice(["ccp", "ncp", "ccp-conv"]), default="ccp", show_default=True)
@click.option("--degree", default=2, show_default=True)
@click.option("--input-dim", default=2, show_default=True)
@click.option("--hidden-dim", default=8, show_default=True)
@click.option("--output-dim", default=2, show_default=True)
@click.option("--conv-layer", default=None, help="in_c,in_h,in_w,out_c,k_h,k_w,stride,pad")
@click.option("--seed", default=0, show_default=True)
@click.option("--scale", default=0.5, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def cmd_gen(kind, degree, input_dim, hidden_dim, output_dim, conv_layer, seed, scale, out_path):
    """Write a deterministic random network to a model file."""
    try:
        if kind == "ccp-conv":
            if conv_layer is None:
                raise ValueError("ccp-conv requires --conv-layer")
            dims = (degree, _parse_conv(conv_layer), output_dim)
        else:
            dims = (degree, input_dim, hidden_dim, output_dim)
        net = generate_random_network(kind, dims, seed, scale)
        save_model(net, out_path)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"wrote {kind} model (degree {degree}) to {out_path}")


@main.command("train")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--degree", default=2, show_default=True)
@click.option("--hidden-dim", default=8, show_default=True)
@click.option("--epochs", default=200, show_default=True)
@click.option("--lr", default=0.5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def cmd_train(data_path, degree, hidden_dim, epochs, lr, seed, out_path):
    """Fit a small skip-product network on a CSV dataset and save it."""
    try:
        dataset = load_dataset_csv(data_path)
        net = toy_train(dataset, (degree, hidden_dim), epochs, lr, seed)
        save_model(net, out_path)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    acc = training_accuracy(net, dataset)
    click.echo(f"trained degree-{degree} model on {len(dataset)} rows; train accuracy {acc:.3f}")
    click.echo(f"wrote model to {out_path}")
