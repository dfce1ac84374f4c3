"""
Command line entry point.

    generate   synthetic CSI dataset
    pretrain   masked-reconstruction pretraining, loss CSV and checkpoint
    eval       pilot-pattern channel estimation against trilinear interpolation
    bench      forward latency of the hybrid encoder and the full-attention baseline

numpy is imported inside the commands so that `bench --threads` can pin the
BLAS thread pools first.
"""
import argparse
import logging
import os
import sys
from pathlib import Path

from core.utils.errors import ComHymbaError, ConfigurationError

log = logging.getLogger(__name__)

THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _dims(text):
    try:
        dims = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims must look like 16x32x32, got {text!r}")
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"dims must be three positive integers LxKxNs, got {text!r}")
    return dims


def cmd_generate(args):
    from core.channel.dataset import generate_dataset
    from core.channel.gbsm import ArrayGeometry, GridSpec
    from core.data_loading.load_dataset import dataset_checksum
    from core.utils.utils import make_config

    grid = make_config(GridSpec, n_time=args.L, n_freq=args.K)
    geom_tx, geom_rx = make_config(ArrayGeometry, n_h=args.ntx), make_config(ArrayGeometry, n_h=args.nrx)
    manifest = generate_dataset(args.out, args.seed, args.samples, grid, geom_tx, geom_rx, n_paths=args.paths,
                                mobility=args.mobility, delay_spread=args.delay_spread, processes=args.processes)
    print(f"{manifest.samples} samples of shape {manifest.sample_shape}, checksum {dataset_checksum(args.out)}")


def _run_config(args):
    from core.utils.utils import LossWeights, TrainConfig, make_config, model_parameters, read_config

    if args.config:
        model_cfg, train, loss = read_config(args.config)
    else:
        model_cfg, train, loss = model_parameters(args.scale), TrainConfig(), LossWeights()
    if args.steps is not None:
        train = make_config(TrainConfig, **{**train.model_dump(), "max_steps": args.steps})
    return model_cfg, train, loss


def cmd_pretrain(args):
    import pandas as pd

    from core.data_loading.checkpoint import load_checkpoint, save_checkpoint
    from core.data_loading.load_dataset import load_dataset
    from core.mae.model import ComHymba, count_parameters
    from core.mae.train import pretrain
    from core.patchify.patches import patch_grid_for

    _, data = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    losses_csv = out / "losses.csv"

    if args.resume:
        model, manifest, optimizer_state = load_checkpoint(args.resume)
        if manifest.train is None or manifest.loss is None or optimizer_state is None:
            raise ConfigurationError(f"{args.resume} holds no optimizer state, cannot resume from it")
        train, loss, total_steps = manifest.train, manifest.loss, manifest.total_steps
        start_step, schedule_state = manifest.step, manifest.schedule
    else:
        model_cfg, train, loss = _run_config(args)
        grid = patch_grid_for(data.shape[1:], model_cfg)
        model = ComHymba(model_cfg, grid.payload_dim, seed=train.seed)
        total_steps, start_step, optimizer_state, schedule_state = None, 0, None, None
    log.info("model with %d parameters", count_parameters(model))

    total_steps = total_steps or train.total_steps(len(data))
    losses, optimizer, schedule = pretrain(model, data, train, loss, total_steps=total_steps, start_step=start_step,
                                           optimizer_state=optimizer_state, schedule_state=schedule_state,
                                           stop_step=args.stop_at)
    step = start_step + len(losses)
    if start_step and losses_csv.is_file():
        earlier = pd.read_csv(losses_csv)
        losses = pd.concat([earlier[earlier["step"] < start_step], losses], ignore_index=True)
    losses.to_csv(losses_csv, index=False)
    save_checkpoint(out / "checkpoint", model, optimizer, step=step, seed=train.seed,
                    total_steps=total_steps, train=train, loss=loss, schedule=schedule.state())
    if args.plot:
        from core.plotting import plot_loss_curves
        log.info("loss curves written to %s", plot_loss_curves(losses_csv))
    final = losses["L_total"].iloc[-1] if len(losses) else float("nan")
    print(f"step {step} of {total_steps}, final L_total {final:.6g}, written to {out}")


def _eval_plan(mask, grid, spacing):
    from core.masking.strategies import AXES, mask_pilot, mask_pilot_comb

    if mask == "pilot":
        return mask_pilot(grid)
    axis = mask.split("-", 1)[1] if mask.startswith("comb-") else None
    if axis not in AXES:
        raise ConfigurationError(f"--mask must be pilot or comb-<{'|'.join(AXES)}>, got {mask!r}")
    return mask_pilot_comb(grid, axis, spacing)


def cmd_eval(args):
    from core.data_loading.checkpoint import load_checkpoint
    from core.data_loading.load_dataset import load_dataset
    from core.mae.evaluate import eval_pilot_estimation
    from core.patchify.patches import patch_grid_for

    model, _, _ = load_checkpoint(args.ckpt)
    _, data = load_dataset(args.data)
    grid = patch_grid_for(data.shape[1:], model.config)
    plan = _eval_plan(args.mask, grid, args.spacing)
    report = eval_pilot_estimation(model, data, grid, plan, snr_db=args.snr_db, seed=args.seed)
    report_csv = Path(args.report) if args.report else Path(args.ckpt) / "eval_report.csv"
    report.to_csv(report_csv, index=False)
    print(f"{plan.strategy}: model NMSE {report['nmse_model'].mean():.6g}, "
          f"interpolation NMSE {report['nmse_baseline'].mean():.6g}, report in {report_csv}")


def cmd_bench(args):
    for name in THREAD_VARIABLES:
        os.environ[name] = str(args.threads)

    from core.bench.latency import VARIANTS, bench_case, dims_for_tokens, run_benchmark, scaling_fit, speedup_table
    from core.utils.utils import model_parameters

    dims = list(args.dims or [])
    if args.tokens:
        config = model_parameters(args.scale)
        dims += [dims_for_tokens(n, config) for n in args.tokens]
    if not dims:
        raise ConfigurationError("bench needs --dims or --tokens")
    cases = [bench_case(args.scale, d, args.reps, args.warmup) for d in dims]
    variants = VARIANTS if args.variant == "both" else (args.variant,)
    records = run_benchmark(cases, variants, threads=args.threads, keep_full_layers=args.keep_full_layers,
                            seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    records.to_csv(out, index=False)

    if args.variant == "both":
        table = speedup_table(records)
        table.to_csv(out.with_name(f"{out.stem}_speedup.csv"), index=False)
        for row in table.itertuples():
            print(f"{row.scale} {row.L}x{row.K}x{row.Ns} ({row.tokens} tokens): speedup {row.ratio:.2f}x")
    for variant, rows in records.dropna(subset=["median_ms"]).groupby("variant"):
        try:
            print(f"{variant}: latency ~ tokens^{scaling_fit(rows['tokens'], rows['median_ms']):.2f}")
        except ComHymbaError as e:
            log.debug("no scaling fit for %s: %s", variant, e)
    if args.plot:
        from core.plotting import plot_scaling
        log.info("scaling figure written to %s", plot_scaling(out))


def build_parser():
    parser = argparse.ArgumentParser(prog="comhymba", description="Wireless channel foundation model at desk scale.")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Logging level (default INFO).")
    sub = parser.add_subparsers(dest="command", metavar="{generate,pretrain,eval,bench}")

    p = sub.add_parser("generate", help="Generate a synthetic CSI dataset.")
    p.add_argument("--seed", type=int, default=0, help="Dataset seed.")
    p.add_argument("--samples", type=int, default=16, help="Number of channel samples.")
    p.add_argument("--L", type=int, default=16, help="Time samples per channel.")
    p.add_argument("--K", type=int, default=32, help="Subcarriers per channel.")
    p.add_argument("--ntx", type=int, default=4, help="Transmit antennas (horizontal ULA).")
    p.add_argument("--nrx", type=int, default=2, help="Receive antennas (horizontal ULA).")
    p.add_argument("--paths", type=int, default=8, help="Multipath components per sample.")
    p.add_argument("--mobility", default="pedestrian", choices=["static", "pedestrian", "vehicular", "high-speed"],
                   help="Mobility class setting the maximum Doppler shift.")
    p.add_argument("--delay-spread", type=float, default=300e-9, help="Delay spread in seconds.")
    p.add_argument("--processes", type=int, default=1, help="Worker processes.")
    p.add_argument("--out", required=True, help="Output directory.")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("pretrain", help="Masked-reconstruction pretraining.")
    p.add_argument("--data", required=True, help="Dataset directory.")
    p.add_argument("--config", help="key = value config file; defaults to the --scale preset.")
    p.add_argument("--scale", default="toy", choices=["toy", "small", "medium", "reference"],
                   help="Architecture preset when no config file is given.")
    p.add_argument("--steps", type=int, help="Override the number of optimizer steps.")
    p.add_argument("--resume", help="Checkpoint directory to continue from.")
    p.add_argument("--stop-at", type=int, help="Stop and checkpoint after this step; continue later with --resume.")
    p.add_argument("--plot", action="store_true", help="Write a loss-curve PNG next to the CSV.")
    p.add_argument("--out", required=True, help="Output directory for losses.csv and the checkpoint.")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("eval", help="Pilot-pattern channel estimation.")
    p.add_argument("--ckpt", required=True, help="Checkpoint directory.")
    p.add_argument("--data", required=True, help="Dataset directory of held-out channels.")
    p.add_argument("--mask", default="pilot", help="pilot or comb-<time|frequency|space>.")
    p.add_argument("--spacing", type=int, default=2, help="Slab spacing of comb pilots.")
    p.add_argument("--snr-db", type=float, help="Add complex AWGN at this SNR to the observations.")
    p.add_argument("--seed", type=int, default=0, help="Noise seed.")
    p.add_argument("--report", help="Report CSV path; defaults to <ckpt>/eval_report.csv.")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="Forward latency of both variants.")
    p.add_argument("--dims", type=_dims, nargs="+", help="Input dims LxKxNs, e.g. 16x32x32.")
    p.add_argument("--tokens", type=int, nargs="+", help="Token counts; dims are derived from the patch sizes.")
    p.add_argument("--variant", default="both", choices=["comhymba", "transformer", "both"])
    p.add_argument("--scale", default="small", choices=["toy", "small", "medium", "reference"])
    p.add_argument("--reps", type=int, default=10, help="Timed repetitions (at least 5).")
    p.add_argument("--warmup", type=int, default=2, help="Warmup passes (at least 2).")
    p.add_argument("--threads", type=int, default=1, help="BLAS threads, recorded in the CSV.")
    p.add_argument("--keep-full-layers", action="store_true",
                   help="Keep the preset full-attention layers in the hybrid encoder.")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot", action="store_true", help="Write a scaling PNG next to the CSV.")
    p.add_argument("--out", required=True, help="Benchmark CSV path.")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ComHymbaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
