"""
Command-line entry point.

    swformer train      --config configs/toy.json --set train.epochs=5 --out runs/toy
    swformer eval       --checkpoint runs/toy/checkpoint
    swformer haar-bench --size 16 --T 4
    swformer spectrum   --checkpoint runs/toy/checkpoint --compare-control
    swformer energy     --checkpoint runs/toy/checkpoint
    swformer ablate     --flags no_haar no_neg --seeds 0 1 2

Exit codes: 0 success, 1 user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type

import torch
from pydantic import BaseModel, ValidationError

from swformer.analysis.energy import count_sops, layer_table, sops_matching, trace_model, write_energy_report
from swformer.analysis.haar_bench import run_haar_bench, summarize, write_bench_csv
from swformer.analysis.spectrum import compare_highfreq, spectrum, write_gnuplot_data, write_spectrum_csv
from swformer.config import settings
from swformer.data.datasets import Dataset, iterate_batches
from swformer.data.loaders import load_dataset
from swformer.errors import SWFormerError, UsageError
from swformer.models import CliInvocation, ModelConfig, RunConfig
from swformer.network.checkpoint import load_checkpoint
from swformer.network.swformer import SWformer
from swformer.reports import write_json
from swformer.training.ablation import run_ablation_suite, variant_config
from swformer.training.trainer import evaluate, train, write_run

logger = logging.getLogger(__name__)

SECTIONS: Dict[str, Type[BaseModel]] = {
    name: field.annotation for name, field in RunConfig.model_fields.items()
}
USER_ERRORS = (SWFormerError, ValidationError, FileNotFoundError, PermissionError)


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting."""

    def error(self, message: str) -> None:
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage().strip()}")


# ============================================================
# CONFIG RESOLUTION
# ============================================================


def _descend(model: Type[BaseModel], parts: Sequence[str], key: str) -> None:
    for i, part in enumerate(parts):
        fields = model.model_fields
        if part not in fields:
            raise UsageError(f"--set {key}: unknown field {part!r}")
        annotation = fields[part].annotation
        if i < len(parts) - 1:
            if not (isinstance(annotation, type) and issubclass(annotation, BaseModel)):
                raise UsageError(f"--set {key}: {part!r} has no sub-fields")
            model = annotation


def resolve_key(key: str) -> List[str]:
    """`section.field[.sub]` or a bare field name unique across sections."""
    parts = key.strip().split(".")
    if parts[0] in SECTIONS:
        if len(parts) < 2:
            raise UsageError(f"--set {key}: name a field inside section {parts[0]!r}")
        _descend(SECTIONS[parts[0]], parts[1:], key)
        return parts
    owners = [name for name, model in SECTIONS.items() if parts[0] in model.model_fields]
    if not owners:
        raise UsageError(f"--set {key}: unknown key")
    if len(owners) > 1:
        raise UsageError(f"--set {key}: ambiguous key, use one of {', '.join(o + '.' + parts[0] for o in owners)}")
    _descend(SECTIONS[owners[0]], parts, key)
    return [owners[0]] + parts


def parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        path = resolve_key(key)
        node = data
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = parse_value(raw)
    return data


def load_run_config(invocation: CliInvocation) -> RunConfig:
    data: Dict[str, Any] = {}
    if invocation.config_path:
        path = Path(invocation.config_path)
        if not path.exists():
            raise UsageError(f"--config: file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise UsageError(f"--config: {path} is not valid JSON: {e}") from e
    data = apply_overrides(data, invocation.overrides)
    if invocation.seed is not None:
        data.setdefault("train", {})["seed"] = invocation.seed
    return RunConfig.model_validate(data)


def align_to_data(run_cfg: RunConfig, dataset: Dataset) -> RunConfig:
    """Match model input geometry and class count to the dataset."""
    h, w = dataset.image_size
    update = {
        "input_size": (h, w),
        "in_channels": dataset.in_channels,
        "num_classes": dataset.num_classes,
    }
    current = {k: getattr(run_cfg.model, k) for k in update}
    if tuple(current["input_size"]) == (h, w) and all(current[k] == update[k] for k in ("in_channels", "num_classes")):
        return run_cfg
    logger.info("Aligning model to dataset %s: %s -> %s", dataset.name, current, update)
    model = ModelConfig.model_validate({**run_cfg.model.model_dump(), **update})
    return run_cfg.model_copy(update={"model": model})


def prepare_output(out: Path) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as e:
        raise UsageError(f"--out: cannot write to {out}: {e}") from e
    return out


# ============================================================
# SUBCOMMANDS
# ============================================================


def _trace_inputs(dataset: Dataset, count: int) -> torch.Tensor:
    split = dataset.test if len(dataset.test) else dataset.train
    x, _ = next(iterate_batches(split.take(count), count, dataset.kind))
    return x


def _model_for(args: argparse.Namespace, run_cfg: RunConfig, dataset: Dataset) -> Tuple[SWformer, RunConfig]:
    if getattr(args, "checkpoint", None):
        model = load_checkpoint(Path(args.checkpoint))
        return model, run_cfg.model_copy(update={"model": model.cfg})
    logger.info("No checkpoint given; training from the run config")
    model, _ = train(run_cfg.model, run_cfg.train, dataset)
    return model, run_cfg


def _write_trace_reports(model: SWformer, run_cfg: RunConfig, dataset: Dataset, out: Path) -> None:
    trace = trace_model(model, _trace_inputs(dataset, run_cfg.analysis.trace_batch))
    profiles = [spectrum(trace, name) for name in trace.names if bool((trace.features[name] != 0).any())]
    write_spectrum_csv(profiles, out / "spectrum.csv")
    write_gnuplot_data(profiles, out / "spectrum.dat")
    report = count_sops(trace, run_cfg.model, run_cfg.analysis.e_mac_pj, run_cfg.analysis.e_ac_pj)
    write_energy_report(report, out / "energy.json")


def cmd_train(args: argparse.Namespace, run_cfg: RunConfig, out: Path) -> int:
    dataset = load_dataset(run_cfg.data, run_cfg.model.timesteps)
    run_cfg = align_to_data(run_cfg, dataset)
    model, record = train(run_cfg.model, run_cfg.train, dataset)
    summary = write_run(out, model, record, run_cfg)
    if args.trace:
        _write_trace_reports(model, run_cfg, dataset, out)
    print(json.dumps(summary, indent=2, ensure_ascii=False))
    return 0


def cmd_eval(args: argparse.Namespace, run_cfg: RunConfig, out: Path) -> int:
    if not args.checkpoint:
        raise UsageError("eval: --checkpoint is required")
    model = load_checkpoint(Path(args.checkpoint))
    run_cfg = run_cfg.model_copy(update={"model": model.cfg})
    dataset = load_dataset(run_cfg.data, model.cfg.timesteps)
    result = {split: evaluate(model, dataset, split) for split in ("train", "val", "test") if len(getattr(dataset, split))}
    write_json(out / "config.json", run_cfg.model_dump(mode="json"))
    write_json(out / "eval.json", {"checkpoint": str(args.checkpoint), "accuracy": result})
    if args.trace:
        _write_trace_reports(model, run_cfg, dataset, out)
    print(json.dumps(result, indent=2))
    return 0


def cmd_haar_bench(args: argparse.Namespace, run_cfg: RunConfig, out: Path) -> int:
    a = run_cfg.analysis
    rows = run_haar_bench(
        size=args.size or a.bench_size,
        timesteps=args.T or a.bench_timesteps,
        v_ths=args.v_th or a.bench_v_th,
        n_images=args.images or a.bench_images,
        seed=run_cfg.train.seed,
    )
    write_json(out / "config.json", run_cfg.model_dump(mode="json"))
    write_bench_csv(rows, out / "haar_bench.csv")
    print(json.dumps(summarize(rows), indent=2))
    return 0


def cmd_spectrum(args: argparse.Namespace, run_cfg: RunConfig, out: Path) -> int:
    dataset = load_dataset(run_cfg.data, run_cfg.model.timesteps)
    run_cfg = align_to_data(run_cfg, dataset)
    model, run_cfg = _model_for(args, run_cfg, dataset)
    inputs = _trace_inputs(dataset, run_cfg.analysis.trace_batch)
    trace = trace_model(model, inputs)
    layers = args.layers or [n for n in trace.names if bool((trace.features[n] != 0).any())]
    profiles = [spectrum(trace, name) for name in layers]
    write_json(out / "config.json", run_cfg.model_dump(mode="json"))
    write_spectrum_csv(profiles, out / "spectrum.csv")
    write_gnuplot_data(profiles, out / "spectrum.dat")

    if args.compare_control:
        final = f"block{run_cfg.model.depth}.mixer"
        control_cfg = variant_config(run_cfg.model, "global_mean")
        control, _ = train(control_cfg, run_cfg.train, dataset)
        control_trace = trace_model(control, inputs)
        value = compare_highfreq(
            spectrum(trace, final), spectrum(control_trace, final), tuple(run_cfg.analysis.band)
        )
        write_json(out / "spectrum_compare.json", {"layer": final, "band": list(run_cfg.analysis.band), "highfreq_gap": value})
        print(f"compare_highfreq({final}) = {value}")
    return 0


def cmd_energy(args: argparse.Namespace, run_cfg: RunConfig, out: Path) -> int:
    dataset = load_dataset(run_cfg.data, run_cfg.model.timesteps)
    run_cfg = align_to_data(run_cfg, dataset)
    model, run_cfg = _model_for(args, run_cfg, dataset)
    trace = trace_model(model, _trace_inputs(dataset, run_cfg.analysis.trace_batch))
    report = count_sops(trace, run_cfg.model, run_cfg.analysis.e_mac_pj, run_cfg.analysis.e_ac_pj)
    write_json(out / "config.json", run_cfg.model_dump(mode="json"))
    write_energy_report(report, out / "energy.json")
    for line in layer_table(report):
        print(line)
    print(f"wavelet-path SOPs: {sops_matching(report, '.fl.'):.4g}")
    print(f"total: {report.total_sops:.4g} SOPs, {report.total_energy_mj:.4g} mJ")
    return 0


def cmd_ablate(args: argparse.Namespace, run_cfg: RunConfig, out: Path) -> int:
    dataset = load_dataset(run_cfg.data, run_cfg.model.timesteps)
    run_cfg = align_to_data(run_cfg, dataset)
    write_json(out / "config.json", run_cfg.model_dump(mode="json"))
    table = run_ablation_suite(run_cfg.model, args.flags, run_cfg.train, dataset, seeds=args.seeds, out_dir=out)
    for variant in table.variants:
        print(f"{variant:<14} {table.mean_accuracy(variant):.4f}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "haar-bench": cmd_haar_bench,
    "spectrum": cmd_spectrum,
    "energy": cmd_energy,
    "ablate": cmd_ablate,
}


# ============================================================
# PARSER
# ============================================================


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", help="Run config JSON (model/train/data/analysis sections)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a config field; repeatable")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--seed", type=int, help="Training seed")
    common.add_argument("--trace", action="store_true", help="Capture activations and write spectrum/energy reports")

    parser = ArgumentParser(prog="swformer", description="Spiking wavelet transformer toolkit")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=ArgumentParser)

    sub.add_parser("train", parents=[common], help="Train a model")
    p = sub.add_parser("eval", parents=[common], help="Evaluate a checkpoint")
    p.add_argument("--checkpoint")
    p = sub.add_parser("haar-bench", parents=[common], help="Spiking Haar round-trip PSNR bench")
    p.add_argument("--size", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--v-th", dest="v_th", type=float, nargs="+")
    p.add_argument("--images", type=int)
    p = sub.add_parser("spectrum", parents=[common], help="Feature-map spectrum profiles")
    p.add_argument("--checkpoint")
    p.add_argument("--layers", nargs="+")
    p.add_argument("--compare-control", action="store_true",
                   help="Also train a global-mean mixer control and compare high-frequency content")
    p = sub.add_parser("energy", parents=[common], help="Synaptic-operation and energy report")
    p.add_argument("--checkpoint")
    p = sub.add_parser("ablate", parents=[common], help="Train base and ablated variants")
    p.add_argument("--flags", nargs="*", default=[])
    p.add_argument("--seeds", type=int, nargs="*")
    return parser


def parse_and_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        out = Path(args.out) if args.out else settings.get_output_dir(Path.cwd()) / args.subcommand
        invocation = CliInvocation(
            subcommand=args.subcommand,
            config_path=args.config,
            output_dir=str(out),
            overrides=args.overrides,
            seed=args.seed,
            trace=args.trace,
        )
        run_cfg = load_run_config(invocation)
        settings.apply_thread_cap()
        prepare_output(out)
        return COMMANDS[invocation.subcommand](args, run_cfg, out)
    except SystemExit as e:
        return int(e.code or 0)
    except USER_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception("Internal error")
        print(f"internal error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    logging.basicConfig(
        level=getattr(logging, settings.SWF_LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
