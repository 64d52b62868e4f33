"""Command-line interface wiring the modules into reproducible experiments.

Subcommands: train, attack, eval, sweep, heatmap, selfcheck.  Every run that
writes an output also writes a JSON manifest (resolved flags, seed, version,
output paths) alongside it; replaying the recorded flags reproduces the
outputs bit-identically.

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 selfcheck failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__, attack as attack_mod, data, evaluate, explain, nn, selfcheck, transforms


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _apply_config_file(argv: list[str]) -> list[str]:
    """Expand `--config FILE` into leading key=value flags so explicit flags
    override the file."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise SystemExit(1)
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2 :]
    injected: list[str] = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            injected.append(f"--{key.strip()}")
            if val.strip():
                injected.extend(val.strip().split())
    # insert right after the subcommand token
    return rest[:1] + injected + rest[1:]


def _load_dataset(value: str) -> data.Dataset:
    if "," in value:
        images, labels = value.split(",", 1)
        return data.load_mnist_idx(images, labels)
    if value.endswith(".bin"):
        return data.load_cifar10_bin(value)
    raise ValueError(
        f"dataset {value!r} not understood: pass 'images.idx,labels.idx' or a CIFAR-10 .bin file"
    )


def _write_manifest(primary_out: str, subcommand: str, args: argparse.Namespace,
                    outputs: list[str]) -> None:
    flags = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "subcommand": subcommand,
        "flags": flags,
        "seed": flags.get("seed"),
        "version": __version__,
        "outputs": outputs,
    }
    with open(primary_out + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _add_attack_flags(p: _Parser) -> None:
    p.add_argument("--attack", choices=("mifgsm", "cwt", "dim", "sim", "bsr"),
                   default="cwt", help="input transformation (mifgsm = none)")
    p.add_argument("--eps", type=float, default=16 / 255, help="L-inf budget in pixel units")
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--alpha", type=float, default=None, help="step size (default eps/iters)")
    p.add_argument("--mu", type=float, default=1.0, help="momentum decay")
    p.add_argument("--copies", type=int, default=20, help="transformed copies per iteration")
    p.add_argument("--blocks", type=int, default=2, help="blocks per side of the grid")
    p.add_argument("--smin", type=float, default=1.0)
    p.add_argument("--smax", type=float, default=1.3)
    p.add_argument("--rot-max", type=float, default=26.0, help="max rotation angle, degrees")
    p.add_argument("--rot-k", type=int, default=2, help="number of rotated blocks")
    p.add_argument("--kernel", choices=(transforms.BILINEAR, transforms.NEAREST),
                   default=transforms.BILINEAR)
    p.add_argument("--no-pre-interp", action="store_true",
                   help="disable the shrink-before-enlarge step")
    p.add_argument("--limit", type=int, default=None, help="cap the number of images")


def _plugin_and_config(args: argparse.Namespace) -> tuple[object, attack_mod.AttackConfig]:
    config = attack_mod.AttackConfig(eps=args.eps, iters=args.iters, alpha=args.alpha,
                                     mu=args.mu, num_copies=args.copies, seed=args.seed)
    cwt_params = transforms.CwtParams(
        n=args.blocks, num_copies=args.copies, s_min=args.smin, s_max=args.smax,
        r_max_deg=args.rot_max, k=args.rot_k, kernel=args.kernel,
        pre_interpolation=not args.no_pre_interp,
    )
    plugin = attack_mod.make_plugin(args.attack, cwt_params=cwt_params,
                                    bsr_n=args.blocks, bsr_r_max_deg=args.rot_max)
    return plugin, config


def _load_model(path: str) -> nn.Model:
    ckpt = data.load_checkpoint(path)
    if not ckpt.model.name:
        ckpt.model.name = os.path.splitext(os.path.basename(path))[0]
    return ckpt.model


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    if args.spec in nn.PRESETS:
        spec = nn.preset_spec(args.spec)
    else:
        with open(args.spec) as fh:
            spec = nn.parse_spec_text(fh.read())
    dataset = _load_dataset(args.dataset)
    name = args.name or os.path.splitext(os.path.basename(args.out))[0]
    ckpt = nn.train(spec, dataset, epochs=args.epochs, lr=args.lr,
                    momentum=args.momentum, seed=args.seed,
                    batch_size=args.batch, name=name)
    data.save_checkpoint(ckpt, args.out)
    _write_manifest(args.out, "train", args, [args.out])
    train_acc = nn.accuracy(ckpt.model, dataset)
    line = f"train_accuracy={train_acc:.4f}"
    if args.test_dataset:
        test_acc = nn.accuracy(ckpt.model, _load_dataset(args.test_dataset))
        line += f" test_accuracy={test_acc:.4f}"
    print(line)
    return 0


def cmd_attack(args) -> int:
    model = _load_model(args.surrogate)
    dataset = _load_dataset(args.dataset)
    if args.limit:
        dataset = dataset.take(args.limit)
    plugin, config = _plugin_and_config(args)
    iter_log: list | None = [] if args.iter_log else None
    if iter_log is not None and dataset.images.shape[0] > 1:
        # the per-iteration log follows the first image only
        pass
    adv = np.empty_like(dataset.images)
    from .rng import Rng

    root = Rng(config.seed)
    for i in range(dataset.images.shape[0]):
        log = iter_log if (iter_log is not None and i == 0) else None
        adv[i] = attack_mod.attack(model, dataset.images[i], int(dataset.labels[i]),
                                   config, plugin, rng=root.split(i), iter_log=log)
    data.write_tnsr(adv, args.out)
    outputs = [args.out]
    if args.iter_log:
        with open(args.iter_log, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "loss", "linf"])
            writer.writerows(iter_log)
        outputs.append(args.iter_log)
    _write_manifest(args.out, "attack", args, outputs)
    # bundled budget check on the written artifact
    written = data.read_tnsr(args.out)
    linf = float(np.abs(written - dataset.images).max())
    in_range = bool((written >= 0).all() and (written <= 1).all())
    print(f"images={written.shape[0]} linf_max={linf:.8f} eps={config.eps:.8f} "
          f"pixels_in_range={in_range}")
    return 0


def _eval_reports(args, plugins) -> tuple[list, nn.Model, list[nn.Model]]:
    surrogate = _load_model(args.surrogate)
    targets = [_load_model(p) for p in args.targets]
    dataset = _load_dataset(args.dataset)
    if args.limit:
        dataset = dataset.take(args.limit)
    return surrogate, targets, dataset


def cmd_eval(args) -> int:
    plugin, config = _plugin_and_config(args)
    surrogate, targets, dataset = _eval_reports(args, [plugin])
    reports = evaluate.evaluate_transfer(surrogate, targets, dataset, config,
                                         [plugin], threads=args.threads)
    evaluate.write_report_csv(reports, args.out)
    _write_manifest(args.out, "eval", args, [args.out])
    sys.stdout.write(evaluate.format_report_table(reports))
    return 0


_SWEEP_FLAG_TO_PARAM = {"blocks": "n", "smax": "s_max", "rot-max": "r_max",
                        "rot-k": "k", "copies": "N", "pre-interp": "pre_interpolation"}


def _parse_sweep_value(param: str, raw: str):
    if param in ("n", "k", "N"):
        return int(raw)
    if param == "pre_interpolation":
        low = raw.lower()
        if low in ("on", "true", "1", "yes"):
            return True
        if low in ("off", "false", "0", "no"):
            return False
        raise ValueError(f"cannot read {raw!r} as an on/off value")
    return float(raw)


def cmd_sweep(args) -> int:
    plugin, config = _plugin_and_config(args)
    surrogate, targets, dataset = _eval_reports(args, [plugin])
    param = _SWEEP_FLAG_TO_PARAM[args.param]
    values = [_parse_sweep_value(param, v) for v in args.values]
    base_params = transforms.CwtParams(
        n=args.blocks, num_copies=args.copies, s_min=args.smin, s_max=args.smax,
        r_max_deg=args.rot_max, k=args.rot_k, kernel=args.kernel,
        pre_interpolation=not args.no_pre_interp,
    )
    results = evaluate.sweep(param, values, surrogate, targets, dataset, config,
                             base_params, threads=args.threads)
    tagged = []
    for value, report in results:
        tagged.append(evaluate.AsrReport(
            attack=f"cwt[{args.param}={value}]", surrogate=report.surrogate,
            targets=report.targets, asr=report.asr,
            surrogate_flags=report.surrogate_flags, mean=report.mean,
            std_dev=report.std_dev, count=report.count, config=report.config,
        ))
    evaluate.write_report_csv(tagged, args.out)
    _write_manifest(args.out, "sweep", args, [args.out])
    sys.stdout.write(evaluate.format_report_table(tagged))
    return 0


def cmd_heatmap(args) -> int:
    model = _load_model(args.model)
    ext = os.path.splitext(args.image)[1].lower()
    if ext in (".pgm", ".ppm"):
        img = data.read_netpbm(args.image)
        image = img[None] if img.ndim == 2 else img
    else:
        image = data.read_tnsr(args.image)
        if image.ndim == 4:
            image = image[0]
    heatmap = explain.grad_cam(model, image, args.class_index, layer=args.layer)
    explain.export_heatmap(heatmap, args.out, image=image if args.overlay else None)
    _write_manifest(args.out, "heatmap", args, [args.out])
    print(f"wrote {args.out} (layer={heatmap.layer}, class={heatmap.class_index})")
    return 0


def cmd_selfcheck(args) -> int:
    results = selfcheck.run_selfcheck()
    failed = False
    for group, (ok, detail) in results.items():
        print(f"[{'PASS' if ok else 'FAIL'}] {group}: {detail}")
        failed |= not ok
    return 3 if failed else 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="cwtkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a small convnet")
    p.add_argument("--spec", required=True, help="preset name or spec file path")
    p.add_argument("--dataset", required=True)
    p.add_argument("--test-dataset", default=None)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="craft adversarial examples")
    p.add_argument("--surrogate", required=True)
    p.add_argument("--dataset", required=True)
    _add_attack_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iter-log", default=None, help="per-iteration CSV (first image)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("eval", help="transfer evaluation across a model zoo")
    p.add_argument("--surrogate", required=True)
    p.add_argument("--targets", nargs="+", required=True)
    p.add_argument("--dataset", required=True)
    _add_attack_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="ablation sweep over one attack knob")
    p.add_argument("--param", choices=tuple(_SWEEP_FLAG_TO_PARAM), required=True)
    p.add_argument("--values", nargs="+", required=True)
    p.add_argument("--surrogate", required=True)
    p.add_argument("--targets", nargs="+", required=True)
    p.add_argument("--dataset", required=True)
    _add_attack_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("heatmap", help="class-activation heatmap for one image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True, help="TNSR or NetPBM input")
    p.add_argument("--class", dest="class_index", type=int, required=True)
    p.add_argument("--layer", type=int, default=None, help="conv layer index (default: last)")
    p.add_argument("--overlay", action="store_true", help="write P6 overlay instead of P5")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("selfcheck", help="run the built-in invariant suite")
    p.set_defaults(func=cmd_selfcheck)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _apply_config_file(argv)
    except OSError as exc:
        sys.stderr.write(f"cwtkit: cannot read config file: {exc}\n")
        return 1
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"cwtkit: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
