"""Transferability evaluation: ASR matrices, aggregation, parameter sweeps.

Adversarial examples are crafted once per transform plugin on the surrogate
and scored against every target.  ASR is computed over images that every
participating model classifies correctly in clean form, so a miss on the
adversarial batch is attributable to the attack.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import attack as attack_mod
from . import data, nn, transforms


@dataclass(frozen=True)
class AsrReport:
    attack: str
    surrogate: str
    targets: tuple[str, ...]
    asr: tuple[float, ...]            # percent, aligned with targets
    surrogate_flags: tuple[bool, ...]  # True where target is the surrogate
    mean: float
    std_dev: float                    # population convention
    count: int                        # evaluation-set size
    config: dict


def attack_success_rate(model: nn.Model, adv_images: np.ndarray, labels) -> float:
    """100 x fraction of adversarial images the model misclassifies."""
    labels = np.asarray(labels)
    if adv_images.shape[0] == 0:
        raise ValueError("cannot compute ASR over an empty evaluation set")
    preds = nn.predict(model, adv_images)
    return 100.0 * float((preds != labels).mean())


def aggregate(values) -> tuple[float, float]:
    """Arithmetic mean and population (divide-by-n) standard deviation."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("aggregate needs at least one value")
    return float(arr.mean()), float(arr.std())


def _config_snapshot(config: attack_mod.AttackConfig, plugin) -> dict:
    snap = {
        "eps": config.eps, "iters": config.iters, "alpha": config.step_size,
        "mu": config.mu, "num_copies": config.num_copies, "seed": config.seed,
        "plugin": plugin.name,
    }
    if isinstance(plugin, attack_mod.CwtTransform):
        p = plugin.params
        snap.update(n=p.n, s_min=p.s_min, s_max=p.s_max, r_max_deg=p.r_max_deg,
                    k=p.k, kernel=p.kernel, pre_interpolation=p.pre_interpolation)
    elif isinstance(plugin, attack_mod.BsrTransform):
        snap.update(n=plugin.n, r_max_deg=plugin.r_max_deg)
    return snap


def evaluate_transfer(surrogate: nn.Model, targets, dataset: data.Dataset,
                      attack_config: attack_mod.AttackConfig, plugins,
                      threads: int = 1) -> list[AsrReport]:
    """One report per plugin: craft on the surrogate, score on every target.

    The dataset is filtered to images every model (surrogate and targets)
    classifies correctly; report order follows the input target list.
    """
    targets = list(targets)
    filtered = data.filter_correct(dataset, [surrogate] + targets)
    reports = []
    for plugin in plugins:
        adv = attack_mod.attack_batch(surrogate, filtered.images, filtered.labels,
                                      attack_config, plugin)

        def score(target):
            return attack_success_rate(target, adv, filtered.labels)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                asrs = list(pool.map(score, targets))
        else:
            asrs = [score(t) for t in targets]
        mean, std = aggregate(asrs)
        reports.append(AsrReport(
            attack=plugin.name,
            surrogate=surrogate.name,
            targets=tuple(t.name for t in targets),
            asr=tuple(asrs),
            surrogate_flags=tuple(t.name == surrogate.name for t in targets),
            mean=mean,
            std_dev=std,
            count=len(filtered),
            config=_config_snapshot(attack_config, plugin),
        ))
    return reports


SWEEP_PARAMS = ("n", "s_max", "r_max", "k", "N", "pre_interpolation")


def sweep(parameter: str, values, surrogate: nn.Model, targets, dataset: data.Dataset,
          base_config: attack_mod.AttackConfig,
          base_params: transforms.CwtParams | None = None,
          threads: int = 1) -> list[tuple[object, AsrReport]]:
    """Vary one knob of the block-wise attack, all others held at base."""
    if parameter not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {parameter!r}; have {SWEEP_PARAMS}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    base_params = base_params or transforms.CwtParams()
    out = []
    for value in values:
        config = base_config
        params = base_params
        if parameter == "n":
            params = replace(base_params, n=int(value))
        elif parameter == "s_max":
            params = replace(base_params, s_max=float(value))
        elif parameter == "r_max":
            params = replace(base_params, r_max_deg=float(value))
        elif parameter == "k":
            params = replace(base_params, k=int(value))
        elif parameter == "N":
            config = replace(base_config, num_copies=int(value))
        elif parameter == "pre_interpolation":
            params = replace(base_params, pre_interpolation=bool(value))
        plugin = attack_mod.CwtTransform(params)
        report = evaluate_transfer(surrogate, targets, dataset, config, [plugin],
                                   threads=threads)[0]
        out.append((value, report))
    return out


# ---------------------------------------------------------------------------
# report output


def report_rows(report: AsrReport) -> list[list]:
    rows = []
    for target, asr, flag in zip(report.targets, report.asr, report.surrogate_flags):
        rows.append([report.attack, report.surrogate, target, f"{asr:.4f}",
                     "1" if flag else "0"])
    rows.append([report.attack, report.surrogate, "MEAN", f"{report.mean:.4f}", ""])
    rows.append([report.attack, report.surrogate, "STD", f"{report.std_dev:.4f}", ""])
    return rows


def write_report_csv(reports, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attack", "surrogate", "target", "asr", "is_surrogate"])
        for report in reports:
            writer.writerows(report_rows(report))


def format_report_table(reports) -> str:
    """Human-readable aligned table (one row per attack)."""
    if not reports:
        return ""
    targets = reports[0].targets
    header = ["attack", "surrogate"] + [
        t + ("*" if flag else "")
        for t, flag in zip(targets, reports[0].surrogate_flags)
    ] + ["mean", "std"]
    rows = [header]
    for rep in reports:
        rows.append([rep.attack, rep.surrogate]
                    + [f"{a:.1f}" for a in rep.asr]
                    + [f"{rep.mean:.1f}", f"{rep.std_dev:.1f}"])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    buf = io.StringIO()
    for r in rows:
        buf.write("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() + "\n")
    return buf.getvalue()
