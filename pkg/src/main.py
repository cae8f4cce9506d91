import logging
import os
import sys
from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import Any, Callable, List, Optional, Sequence, Tuple

from numpy import ndarray
from pandas import DataFrame
from plotly.graph_objects import Figure

from src.analytics.framesSweep import FramesSweep
from src.analytics.metrics import (
    binaryRound,
    labelsFromImage,
    misclassificationRate,
    mse,
)
from src.analytics.snrSweep import SnrSweep
from src.analytics.sweepExperiment import (
    SweepAnalytic,
    SweepExperimentConfig,
    readSweep,
    sweepFigure,
)
from src.core.config import parseConfig
from src.core.errors import SweepDemodError
from src.core.imageGrid import FrameStack, ImageGrid
from src.core.persistence import (
    readFrameStack,
    readImageGrid,
    scaleToPgm,
    writePgm,
)
from src.core.priors import PriorConfig
from src.forward.phantom import SlabPhantom
from src.forward.simulate import (
    SimConfig,
    SimulatedStack,
    readGroundTruth,
    simulateStack,
    writeSimulation,
)
from src.solvers.altmin import (
    SolverOptions,
    SolverState,
    resolvePrior,
    solve,
    writeSolverState,
)
from src.solvers.lowrank import (
    CONTINUATION_STAGES,
    LiftedSolution,
    MeasurementOperator,
    lambdaMax,
    solveNuclear,
    writeLiftedSolution,
)
from src.subspace.sweepSubspace import (
    SubspaceOptions,
    SweepSubspace,
    buildSubspaces,
    oracleSubspaces,
    readSubspaces,
    writeSubspaces,
)
from src.utils import atomicDirectory, atomicWriteText, configureLogging

logger: logging.Logger = logging.getLogger(__name__)

PROGRAM: str = "thz-demod"

SUBSPACE_SOURCES: Tuple[str, ...] = ("wavelet", "oracle")


def _overrides(args: Namespace) -> List[str]:
    overrides: List[str] = []
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "workers", None) is not None:
        overrides.append(f"sweep.workers={args.workers}")
    return overrides + list(args.set or [])


def _config(args: Namespace, kind: str) -> Any:
    return parseConfig(args.config, kind, _overrides(args))


def _subspaces(args: Namespace, stack: FrameStack) -> List[SweepSubspace]:
    """Resolve ``--subspace`` to one subspace per frame of ``stack``."""
    source: str = args.subspace

    if source == "wavelet":
        options: SubspaceOptions = _config(args, "subspace")
        return buildSubspaces(
            stack.frames, options, stack.width, stack.height
        )

    if source == "oracle":
        distortions: ndarray
        _, distortions, _ = readGroundTruth(args.stack)
        return oracleSubspaces(distortions)

    subspaces: List[SweepSubspace]
    subspaces, _, _ = readSubspaces(source)
    return subspaces


def runSimulate(args: Namespace) -> str:
    cfg: SimConfig = _config(args, "sim")
    result: SimulatedStack = simulateStack(cfg)

    with atomicDirectory(args.out) as staging:
        writeSimulation(result, staging)

    return (
        f"simulated {result.stack.frameCount} frames "
        f"{result.stack.width}x{result.stack.height}, snr={cfg.snrDb} dB, "
        f"noise variance {result.noiseSigmaSq:.6g}"
    )


def runSubspace(args: Namespace) -> str:
    stack: FrameStack = readFrameStack(args.stack)
    subspaces: List[SweepSubspace] = _subspaces(args, stack)

    with atomicDirectory(args.out) as staging:
        writeSubspaces(subspaces, staging, stack.width, stack.height)

    dimensions: List[int] = [s.dimension for s in subspaces]
    return (
        f"built {len(subspaces)} {args.subspace} subspaces, "
        f"N_j in [{min(dimensions)}, {max(dimensions)}]"
    )


def runSolve(args: Namespace) -> str:
    stack: FrameStack = readFrameStack(args.stack)
    subspaces: List[SweepSubspace] = _subspaces(args, stack)
    prior: PriorConfig = resolvePrior(_config(args, "prior"), stack)
    options: SolverOptions = _config(args, "solver")

    state: SolverState = solve(stack, subspaces, prior, options)

    with atomicDirectory(args.out) as staging:
        writeSolverState(state, stack, staging)

    return (
        f"iterations={state.iteration} objective={state.objective:.9e} "
        f"converged={str(state.converged).lower()}"
    )


def runBaseline(args: Namespace) -> str:
    stack: FrameStack = readFrameStack(args.stack)
    op: MeasurementOperator = MeasurementOperator(
        subspaces=tuple(_subspaces(args, stack))
    )
    prior: PriorConfig = _config(args, "prior")

    lam: float = args.lambda_ratio * lambdaMax(op, stack.frames)
    solution: LiftedSolution = solveNuclear(
        stack, op, lam, iters=args.iters, stages=args.stages
    )

    with atomicDirectory(args.out) as staging:
        writeLiftedSolution(solution, op, prior, stack, staging)

    return (
        f"iterations={solution.iterations} residual={solution.residual:.6e} "
        f"nuclear_norm={solution.nuclearNorm:.6e}"
    )


def evaluationRow(estimate: ImageGrid, phantom: SlabPhantom) -> DataFrame:
    rounded: ImageGrid = binaryRound(estimate, phantom.rho0, phantom.rho1)
    return DataFrame(
        {
            "mse_raw": [mse(estimate, phantom.reflectance)],
            "mse_rounded": [mse(rounded, phantom.reflectance)],
            "misclassification": [
                misclassificationRate(
                    labelsFromImage(estimate, phantom.rho0, phantom.rho1),
                    phantom.labels,
                )
            ],
        }
    )


def runEval(args: Namespace) -> str:
    phantom: SlabPhantom
    phantom, _, _ = readGroundTruth(args.stack)
    estimate: ImageGrid = readImageGrid(Path(args.result) / "rho")

    row: DataFrame = evaluationRow(estimate, phantom)
    if args.out is not None:
        atomicWriteText(
            args.out, row.to_csv(index=False, float_format="%.17g")
        )

    return (
        f"mse={row['mse_raw'][0]:.6e} "
        f"mse_rounded={row['mse_rounded'][0]:.6e} "
        f"misclassified={row['misclassification'][0]:.4%}"
    )


def _runSweep(args: Namespace, analytic: type) -> str:
    cfg: SweepExperimentConfig = _config(args, "sweep")
    sim: SimConfig = _config(args, "sim")

    sweep: SweepAnalytic = analytic(
        cfg=cfg,
        sim=sim,
        prior=_config(args, "prior"),
        options=_config(args, "solver"),
        subspace=_config(args, "subspace"),
    )
    data: DataFrame = sweep.run(args.out)

    return (
        f"{len(data)} {sweep.axis} points x {cfg.trials} trials "
        f"({cfg.subspaceMode}), flagged={int(data['flagged'].sum())}, "
        f"last mse_rounded={data['mse_rounded'].iloc[-1]:.6e}"
    )


def runFramesSweep(args: Namespace) -> str:
    return _runSweep(args, FramesSweep)


def runSnrSweep(args: Namespace) -> str:
    return _runSweep(args, SnrSweep)


def _renderStack(stack: FrameStack, normalize: str, out: Path) -> None:
    if normalize == "frame":
        for j in range(stack.frameCount):
            pixels, _, _ = scaleToPgm(stack.frames[:, j])
            writePgm(
                out / f"frame_{j:03d}.pgm",
                pixels.reshape(stack.height, stack.width),
            )
        return

    pixels, _, _ = scaleToPgm(stack.frames)
    for j in range(stack.frameCount):
        writePgm(
            out / f"frame_{j:03d}.pgm",
            pixels[:, j].reshape(stack.height, stack.width),
        )


def runRender(args: Namespace) -> str:
    source: Path = Path(args.input)

    with atomicDirectory(args.out) as staging:
        if source.suffix == ".csv":
            figure: Figure = sweepFigure(readSweep(source))
            atomicWriteText(
                staging / f"{source.stem}.html",
                figure.to_html(
                    full_html=True, include_plotlyjs="cdn", div_id=source.stem
                ),
            )
            return f"rendered {source.name} as HTML"

        stack: FrameStack = readFrameStack(source)
        _renderStack(stack, args.normalize, staging)

    return f"rendered {stack.frameCount} frames ({args.normalize} scaling)"


def buildParser() -> ArgumentParser:
    """
    Command-line surface: one subcommand per pipeline stage.

    :return: The configured parser.
    :rtype: ArgumentParser
    """
    common: ArgumentParser = ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="key=value file")
    common.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config key (repeatable, beats --config)",
    )
    common.add_argument("--seed", type=int, default=None)
    common.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v INFO, -vv DEBUG"
    )

    parser: ArgumentParser = ArgumentParser(
        prog=PROGRAM,
        description="Blind demodulation of sweep-distorted THz image stacks",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    simulate: ArgumentParser = commands.add_parser(
        "simulate", parents=[common], help="synthesize a frame stack"
    )
    simulate.add_argument("--out", required=True)
    simulate.set_defaults(handler=runSimulate)

    stage: str
    for stage, handler, helpText in (
        ("subspace", runSubspace, "build per-frame distortion subspaces"),
        ("solve", runSolve, "alternating MAP reconstruction"),
        ("baseline", runBaseline, "nuclear-norm low-rank reconstruction"),
    ):
        sub: ArgumentParser = commands.add_parser(
            stage, parents=[common], help=helpText
        )
        sub.add_argument("--stack", required=True)
        sub.add_argument(
            "--subspace",
            default="wavelet",
            help="wavelet, oracle or a directory of saved subspaces",
        )
        sub.add_argument("--out", required=True)
        sub.set_defaults(handler=handler)

        if stage == "baseline":
            sub.add_argument("--lambda-ratio", type=float, default=1e-3)
            sub.add_argument("--iters", type=int, default=200)
            sub.add_argument(
                "--stages", type=int, default=CONTINUATION_STAGES
            )

    evaluate: ArgumentParser = commands.add_parser(
        "eval", parents=[common], help="score a reconstruction"
    )
    evaluate.add_argument("--stack", required=True, help="simulated stack")
    evaluate.add_argument("--result", required=True)
    evaluate.add_argument("--out", default=None, help="optional CSV")
    evaluate.set_defaults(handler=runEval)

    for stage, handler, helpText in (
        ("frames-sweep", runFramesSweep, "MSE against frame count"),
        ("snr-sweep", runSnrSweep, "MSE against SNR"),
    ):
        sub = commands.add_parser(stage, parents=[common], help=helpText)
        sub.add_argument("--out", required=True, help="CSV file")
        sub.add_argument(
            "--workers",
            type=int,
            default=os.cpu_count() or 1,
            help="trial worker processes (default: all cores)",
        )
        sub.set_defaults(handler=handler)

    render: ArgumentParser = commands.add_parser(
        "render", parents=[common], help="PGM or HTML renderings"
    )
    render.add_argument("--input", required=True, help="stack dir or CSV")
    render.add_argument("--out", required=True)
    render.add_argument(
        "--normalize", choices=("frame", "global"), default="frame"
    )
    render.set_defaults(handler=runRender)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of ``thz-demod``.

    Prints a one-line summary on success. Package errors are reported with
    their module-qualified message and exit status 1; usage errors exit with
    status 2.

    :param argv: Arguments, ``sys.argv[1:]`` by default.
    :type argv: Optional[Sequence[str]]
    :return: Exit status.
    :rtype: int
    """
    args: Namespace = buildParser().parse_args(argv)
    configureLogging(args.verbose)

    handler: Callable[[Namespace], str] = args.handler
    try:
        summary: str = handler(args)
    except SweepDemodError as error:
        print(f"{PROGRAM}: {error}", file=sys.stderr)
        return 1

    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
