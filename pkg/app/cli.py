"""
Interfaz de línea de comandos: costo, inferencia, decodificación y verificaciones.

Códigos de salida: 0 éxito, 1 error de validación o de archivos, 2 verificación fallida.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence

from app.config.settings import settings
from app.core.exceptions import BHRNetException, CheckFailure, ValidationException
from app.core.logging import configure_logging
from app.engine.serialization import read_tensor, tensor_summary, write_tensor
from app.models.pose import DecoderConfig
from app.services.network_service import NetworkService
from app.services.pose_service import PoseService
from app.services.report_service import ReportService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CHECK_FAILED = 2


class _Parser(argparse.ArgumentParser):
    """ArgumentParser que reporta errores de uso como ValidationException (código 1)."""

    def error(self, message: str):
        raise ValidationException(f"Argumentos inválidos: {message}")


def _print_json(payload) -> None:
    print(json.dumps(payload, indent=2, ensure_ascii=False))


def cmd_cost(args, networks: NetworkService, reports: ReportService) -> int:
    sizes = args.input_size or [settings.default_input_size]
    report = networks.cost(args.config, sizes[0])
    scaling = networks.scaling(args.config, sizes) if len(sizes) > 1 else None
    if args.format in ("text", "both"):
        print(reports.cost_table(report, scaling), end="")
    if args.format in ("json", "both"):
        payload = report.model_dump(mode="json")
        if scaling:
            payload["scaling"] = [entry.model_dump(mode="json") for entry in scaling]
        _print_json(payload)
    return EXIT_OK


def cmd_infer(args, networks: NetworkService, reports: ReportService) -> int:
    net = networks.load_with_weights(args.config, args.weights, seed=args.seed)
    image = read_tensor(args.input)
    heatmaps, tagmaps = networks.infer(net, image, flip=args.flip)
    prefix = Path(args.output)
    write_tensor(f"{prefix}.heatmaps.bhrt", heatmaps)
    write_tensor(f"{prefix}.tagmaps.bhrt", tagmaps)
    shape, low, high = tensor_summary(heatmaps)
    logger.info(f"Heatmaps {shape} en [{low:.4f}, {high:.4f}] escritos con prefijo {prefix}")
    return EXIT_OK


def cmd_decode(args, networks: NetworkService, reports: ReportService) -> int:
    config = DecoderConfig(
        threshold=args.threshold,
        join_threshold=args.join_threshold,
        max_persons=args.max_persons,
    )
    poses = PoseService().decode(read_tensor(args.heatmaps), read_tensor(args.tagmaps), config)
    _print_json(poses.model_dump(mode="json"))
    return EXIT_OK


def cmd_loss_check(args, networks: NetworkService, reports: ReportService) -> int:
    report = PoseService().loss_check(seed=args.seed, trials=args.trials)
    print(f"max relative error: {report.max_relative_error:.3e} (trials={report.trials}, tolerance={report.tolerance:g})")
    if not report.passed:
        raise CheckFailure(
            "El error relativo de los gradientes supera la tolerancia",
            report.model_dump(),
        )
    return EXIT_OK


def cmd_synth_eval(args, networks: NetworkService, reports: ReportService) -> int:
    report = PoseService().synth_eval(
        seed=args.seed,
        scenes=args.scenes,
        persons=args.persons,
        noise=args.noise,
        tag_jitter=args.tag_jitter,
        num_keypoints=args.keypoints,
        extents=args.extents,
        use_oracle=args.oracle,
    )
    _print_json(report.model_dump(mode="json"))
    return EXIT_OK


def cmd_compare_dist(args, networks: NetworkService, reports: ReportService) -> int:
    comparison = networks.compare(args.config_a, args.config_b, args.input_size)
    print(reports.distribution_table(comparison), end="")
    if not comparison.passed:
        raise CheckFailure(
            "; ".join(comparison.failed_conditions()),
            {"improvement": comparison.improvement, "monotonic_a": comparison.monotonic_a},
        )
    return EXIT_OK


def cmd_init_weights(args, networks: NetworkService, reports: ReportService) -> int:
    count = networks.init_weights(args.config, args.seed, args.output)
    print(f"{count} tensors written to {args.output}")
    return EXIT_OK


COMMANDS: Dict[str, Callable] = {
    "cost": cmd_cost,
    "infer": cmd_infer,
    "decode": cmd_decode,
    "loss-check": cmd_loss_check,
    "synth-eval": cmd_synth_eval,
    "compare-dist": cmd_compare_dist,
    "init-weights": cmd_init_weights,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bhrnet", description="DIR-BHRNet: costo, inferencia y decodificación de poses")
    parser.add_argument("--log-level", default=None, help="Nivel de logging (por defecto el de settings)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("cost", help="Reporte de costo por resolución")
    p.add_argument("--config", required=True)
    p.add_argument("--input-size", type=int, action="append", help="Repetible; los ratios se dan respecto al primero")
    p.add_argument("--format", choices=["text", "json", "both"], default="both")

    p = sub.add_parser("infer", help="Heatmaps y tagmaps de un tensor de imagen BHRT")
    p.add_argument("--config", required=True)
    p.add_argument("--weights", default=None, help="Archivo BHRW; sin él se usan pesos aleatorios de --seed")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="Prefijo de salida (.heatmaps.bhrt / .tagmaps.bhrt)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--flip", action="store_true")

    p = sub.add_parser("decode", help="Decodifica heatmaps y tagmaps BHRT a poses")
    p.add_argument("--heatmaps", required=True)
    p.add_argument("--tagmaps", required=True)
    p.add_argument("--threshold", type=float, default=settings.detection_threshold)
    p.add_argument("--join-threshold", type=float, default=settings.join_threshold)
    p.add_argument("--max-persons", type=int, default=settings.max_persons)

    p = sub.add_parser("loss-check", help="Gradientes analíticos contra diferencias finitas")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=20)

    p = sub.add_parser("synth-eval", help="Evalúa el decodificador sobre escenas sintéticas")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenes", type=int, default=10)
    p.add_argument("--persons", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--tag-jitter", type=float, default=0.0)
    p.add_argument("--keypoints", type=int, default=17)
    p.add_argument("--extents", type=int, default=64)
    p.add_argument("--oracle", action="store_true", help="Compara con el agrupamiento exhaustivo")

    p = sub.add_parser("compare-dist", help="Participaciones por resolución de dos redes")
    p.add_argument("--config-a", required=True)
    p.add_argument("--config-b", required=True)
    p.add_argument("--input-size", type=int, default=None)

    p = sub.add_parser("init-weights", help="Escribe pesos aleatorios reproducibles en BHRW")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Ejecuta un subcomando.

    Args:
        argv: Argumentos (por defecto sys.argv[1:])

    Returns:
        int: Código de salida
    """
    try:
        args = build_parser().parse_args(list(argv) if argv is not None else None)
    except BHRNetException as e:
        configure_logging()
        logger.error(e.message)
        return EXIT_ERROR

    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args, NetworkService(), ReportService())
    except CheckFailure as e:
        logger.error(f"Verificación fallida: {e.message}")
        return EXIT_CHECK_FAILED
    except BHRNetException as e:
        logger.error(f"{e.message} {e.details if e.details else ''}".rstrip())
        return EXIT_ERROR
    except ValueError as e:
        logger.error(f"Valor inválido: {e}")
        return EXIT_ERROR
    except OSError as e:
        logger.error(f"Error de archivo: {e}")
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
