"""ConfKeyBench command-line interface"""
import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from PIL import Image

from app import __version__
from app.config import settings
from app.constants import (
    DEMO_MESSAGE_MAX_BYTES,
    EXIT_CONFIG_ERROR,
    EXIT_EC_FAILURE,
    EXIT_FAILURE,
    EXIT_INFEASIBLE_KEY,
    EXIT_OK,
)
from app.core.exceptions import (
    ConferenceKeyError,
    ConfigurationError,
    DecodingError,
    InfeasibleKeyError,
    InsufficientRoundsError,
    KeyExhaustedError,
    KeyReuseError,
    NoCodeAvailableError,
    RecordFormatError,
    ValidationError,
    VerificationError,
)
from app.models.keys import ConferenceKey, KeyRecord, RecordKind
from app.models.schemas import ExperimentConfig, Report, RunMetadata, load_config
from app.repositories.key_store import KeyRepository
from app.repositories.ledger import LedgerRepository
from app.services import analysis, protocol
from app.services.conference_service import ConferenceKeyService, DistillationResult
from app.services.keyrate import (
    LeakageMode,
    RateInputs,
    SecurityBudget,
    akr,
    finite_key_length,
    optimize_budget,
    pairwise_baseline,
)
from app.services.postprocess import preshared_cost
from app.utils.logging import configure_logging, get_logger
from app.utils.performance import PerformanceMonitor, PerformanceTracker

logger = get_logger(__name__)

EXIT_CODES = (
    ((ValidationError, ConfigurationError), EXIT_CONFIG_ERROR),
    ((InsufficientRoundsError, InfeasibleKeyError, KeyExhaustedError, KeyReuseError), EXIT_INFEASIBLE_KEY),
    ((NoCodeAvailableError, DecodingError, VerificationError), EXIT_EC_FAILURE),
)


def exit_code_for(error: BaseException) -> int:
    for types, code in EXIT_CODES:
        if isinstance(error, types):
            return code
    return EXIT_FAILURE


class CliContext:
    """Per-invocation state shared by the subcommands"""

    def __init__(self, args: argparse.Namespace, config: ExperimentConfig):
        self.args = args
        self.config = config
        self.monitor = PerformanceMonitor()
        self.output_dir = Path(args.output_dir) if args.output_dir else config.output.directory

    def stage(self, name: str) -> PerformanceTracker:
        return PerformanceTracker(name, self.monitor)

    def report(self, **sections) -> Report:
        metadata = RunMetadata(
            command=self.args.command,
            seed=self.config.seed,
            config_hash=self.config.config_hash(),
            version=__version__,
            parties=self.config.protocol.parties or protocol.default_party_names(self.config.n_parties),
        )
        report = Report(metadata=metadata, **sections)
        if self.args.timing or settings.report_timing:
            report.timing = self.monitor.get_aggregated_stats()
        return report

    def write_report(self, report: Report, name: Optional[str] = None) -> Path:
        path = self.output_dir / (name or f"{self.args.command}.json")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.to_json() + "\n", encoding="utf-8")
        logger.info("Report written", path=str(path))
        return path


# -- helpers -------------------------------------------------------------

def save_conference_key(key: ConferenceKey, path: Path, config: ExperimentConfig) -> Path:
    record = KeyRecord(
        kind=RecordKind.CONFERENCE_KEY,
        bits=key.shared(),
        label={
            "parties": key.party_names,
            "eps_tot": key.security_label,
            "seed": config.seed,
            "config_hash": config.config_hash(),
        },
    )
    return KeyRepository(path.parent).save(record, path)


def load_conference_key(path: Path) -> ConferenceKey:
    record = KeyRepository(Path(path).parent).load(path)
    if record.kind != RecordKind.CONFERENCE_KEY:
        raise RecordFormatError("not a conference key record", {"kind": record.kind.name})
    parties = list(record.label.get("parties", ["Alice"]))
    return ConferenceKey(
        bits=np.tile(record.bits, (len(parties), 1)),
        party_names=parties,
        security_label=float(record.label.get("eps_tot", 0.0)),
    )


def _distillation_sections(result: DistillationResult) -> Dict:
    return {
        "estimate": result.estimate.summary(),
        "code": result.code,
        "leakage": result.leakage,
        "rates": result.rates(),
        "key": result.key_summary(),
        "warnings": result.warnings,
    }


def _write_keys(ctx: CliContext, result: DistillationResult) -> Dict[str, str]:
    key_path = save_conference_key(result.key, ctx.output_dir / "conference.ckky", ctx.config)
    paths = {"key": str(key_path)}
    if result.preshared_refill.size:
        refill = KeyRecord(kind=RecordKind.RAW_KEY, bits=result.preshared_refill, label={"use": "preshared"})
        paths["preshared_refill"] = str(KeyRepository(ctx.output_dir).save(refill, "preshared_refill"))
    return paths


# -- subcommands ---------------------------------------------------------

def cmd_simulate(ctx: CliContext) -> int:
    service = ConferenceKeyService(ctx.config)
    with ctx.stage("simulate"):
        session = service.simulate()
    sections = {"session": session.summary()}
    if not session.empty:
        ledger = session.ledger
        frame = protocol.compress_schedule(ledger.schedule)
        sections["session"].update(
            schedule_bits=frame.charged_bits,
            preshared_bits=preshared_cost(ledger.L, ledger.schedule.p),
        )
        repo = LedgerRepository(ctx.output_dir)
        path = repo.save(ledger, ctx.args.ledger or "ledger")
        sections["session"]["ledger"] = str(path)
        if ctx.args.export_json:
            repo.export_json(ledger, path.with_suffix(".json"))
    ctx.write_report(ctx.report(**sections))
    return EXIT_OK


def _load_ledger(ctx: CliContext):
    if not ctx.args.ledger:
        raise ConfigurationError("--ledger is required")
    return LedgerRepository(ctx.output_dir).load(ctx.args.ledger)


def cmd_estimate(ctx: CliContext) -> int:
    ledger = _load_ledger(ctx)
    service = ConferenceKeyService(ctx.config)
    with ctx.stage("estimate"):
        estimate = service.estimate(ledger)
    ctx.write_report(ctx.report(session={"rounds": ledger.L, "p": ledger.schedule.p}, estimate=estimate.summary()))
    return EXIT_OK


def cmd_postprocess(ctx: CliContext) -> int:
    ledger = _load_ledger(ctx)
    service = ConferenceKeyService(ctx.config)
    with ctx.stage("distill"):
        result = service.distill(ledger)
    sections = _distillation_sections(result)
    sections["key"].update(_write_keys(ctx, result))
    ctx.write_report(ctx.report(session={"rounds": ledger.L, "p": ledger.schedule.p}, **sections))
    return EXIT_OK


def cmd_keyrate(ctx: CliContext) -> int:
    args, config = ctx.args, ctx.config
    noise = ConferenceKeyService(config).noise()
    q_x = noise.q_x if args.qx is None else args.qx
    qber = noise.qber() if args.qber is None else args.qber
    N = args.parties or config.n_parties
    eps_tot = args.eps_tot or config.budget.eps_tot

    payload: Dict = {"inputs": {"q_x": q_x, "qber": qber, "N": N}, "akr": akr(q_x, qber)}
    L = args.rounds
    if L is None and args.n is not None and args.m is not None:
        L = args.n + 2 * args.m
    if L is not None:
        p = args.p if args.p is not None else config.protocol.p
        if args.optimize:
            with ctx.stage("optimize_budget"):
                optimum = optimize_budget(q_x, qber, L, N, eps_tot)
            payload["optimum"] = optimum.to_dict()
            if optimum.budget is None:
                raise InfeasibleKeyError("no positive key for any budget", optimum.to_dict())
            budget, p = optimum.budget, optimum.p
        else:
            budget = SecurityBudget.compose(
                eps_tot,
                args.eps_ec or config.budget.eps_EC,
                args.eps_pa or config.budget.eps_PA,
                N,
                config.budget.x_share,
            )
        m = args.m if args.m is not None else max(1, round(p * L))
        n = args.n if args.n is not None else L - 2 * m
        mode = LeakageMode(args.mode)
        inputs = RateInputs(
            L=L, n=n, m=m, p=p, q_x_m=q_x, qber_m=qber, N=N,
            leakage_mode=mode,
            realized_leakage_bits=args.leaked_bits if mode == LeakageMode.REALIZED else None,
        )
        result = finite_key_length(inputs, budget)
        payload["inputs"].update(L=inputs.L, n=n, m=m, p=p, leakage_mode=mode.value)
        payload.update(
            finite=result.to_dict(),
            ell=result.ell,
            ell_before_deduction=result.ell_before_deduction,
            rate=result.skr,
            budget=budget.to_dict(),
            feasible=result.feasible,
        )
        if args.pairwise:
            payload["pairwise"] = pairwise_baseline(q_x, qber, inputs.L, p, budget).to_dict()

    report = ctx.report(rates=analysis.sanitize(payload))
    ctx.write_report(report)
    print(json.dumps(analysis.sanitize(payload), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_sweep(ctx: CliContext) -> int:
    study, out = ctx.args.study, ctx.output_dir
    plot = None
    if study == "finite":
        with ctx.stage("finite_key_sweep"):
            rows = analysis.run_finite_key_sweep(ctx.config)
        columns, plot, name = analysis.SWEEP_COLUMNS, analysis.SWEEP_PLOT, "finite_key_sweep.csv"
        results = [{**asdict(r), "feasible": r.feasible} for r in rows]
    elif study == "akr":
        visibility = ctx.config.noise.visibility if ctx.config.noise.mode == "visibility" else None
        noise = ConferenceKeyService(ctx.config).noise()
        rows = analysis.run_akr_study(noise.q_x, noise.qber(), visibility=visibility)
        columns, plot, name = analysis.AKR_COLUMNS, analysis.AKR_PLOT, "akr_study.csv"
        results = [asdict(r) for r in rows]
    else:
        if not ctx.args.samples:
            raise ConfigurationError("--samples is required for the power study")
        samples = _read_power_samples(Path(ctx.args.samples))
        fit = analysis.fit_power_trend(samples)
        rows = [{"power_mW": s[0], "q_x": s[1], "qber": s[2]} for s in samples]
        columns, plot, name = ("power_mW", "q_x", "qber"), analysis.POWER_PLOT, "power_trend.csv"
        results = fit.to_dict()

    analysis.write_table(rows, columns, out / name, plot if ctx.config.output.gnuplot else None)
    ctx.write_report(ctx.report(results=analysis.sanitize(results)))
    return EXIT_OK


def _read_power_samples(path: Path) -> List[tuple]:
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ConfigurationError(f"Cannot read samples {path}: {e}")
    samples = []
    for line in lines:
        cells = [c.strip() for c in line.split(",")]
        try:
            samples.append(tuple(float(c) for c in cells[:3]))
        except ValueError:
            continue  # header
    return samples


def cmd_surface(ctx: CliContext) -> int:
    values = ctx.args.c or ctx.config.sweep.surface_c
    summaries = []
    for c in values:
        surface = analysis.topology_noise_surface(c, ctx.config.sweep.grid_step)
        analysis.write_table(
            surface.rows(), analysis.SURFACE_COLUMNS, ctx.output_dir / f"surface_c{c:g}.csv",
            analysis.SURFACE_PLOT if ctx.config.output.gnuplot else None,
        )
        summaries.append(surface.summary())
    ctx.write_report(ctx.report(results=summaries))
    return EXIT_OK


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def cmd_encrypt(ctx: CliContext) -> int:
    args = ctx.args
    key_path = Path(args.key)
    key = load_conference_key(key_path)
    usage = analysis.KeyUsageLedger.for_key_file(key_path, key.length)
    output = Path(args.output)
    output.parent.mkdir(parents=True, exist_ok=True)

    if args.demo_image or args.image:
        image = analysis.placeholder_image() if args.demo_image else Image.open(args.input)
        cipher, offset = analysis.encrypt_image(image, key, usage)
        cipher.save(output, format="PNG")
        meta = {"offset": offset, "n_bytes": len(cipher.tobytes()), "image": list(cipher.size)}
    else:
        data = Path(args.input).read_bytes()
        cipher_bytes, offset = analysis.otp_encrypt(data, key, usage)
        output.write_bytes(cipher_bytes)
        meta = {"offset": offset, "n_bytes": len(cipher_bytes)}

    meta.update(key_id=usage.key_id, remaining_bits=usage.remaining)
    analysis.write_json(meta, _sidecar(output))
    ctx.write_report(ctx.report(key=meta))
    return EXIT_OK


def cmd_decrypt(ctx: CliContext) -> int:
    args = ctx.args
    key = load_conference_key(Path(args.key))
    source = Path(args.input)
    meta = {}
    if _sidecar(source).exists():
        meta = json.loads(_sidecar(source).read_text(encoding="utf-8"))
    offset = args.offset if args.offset is not None else meta.get("offset")
    if offset is None:
        raise ConfigurationError("no --offset given and no sidecar next to the ciphertext")

    output = Path(args.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    if "image" in meta:
        plain = analysis.decrypt_image(Image.open(source).convert("RGB"), key, int(offset))
        plain.save(output, format="PNG")
    else:
        output.write_bytes(analysis.otp_decrypt(source.read_bytes(), key, int(offset)))
    ctx.write_report(ctx.report(key={"offset": int(offset), "output": str(output)}))
    return EXIT_OK


def message_demo(key: ConferenceKey) -> Dict:
    """Encrypt and decrypt a byte pattern sized to the key"""
    n_bytes = min(key.length // 8, DEMO_MESSAGE_MAX_BYTES)
    if n_bytes == 0:
        logger.warning("Encryption demo skipped", key_bits=key.length)
        return {"skipped": True, "message_bytes": 0}
    message = (bytes(range(256)) * (n_bytes // 256 + 1))[:n_bytes]
    usage = analysis.KeyUsageLedger(key.length)
    cipher_bytes, offset = analysis.otp_encrypt(message, key, usage)
    return {
        "skipped": False,
        "round_trip": analysis.otp_decrypt(cipher_bytes, key, offset) == message,
        "message_bytes": n_bytes,
        "offset": offset,
    }


def cmd_report(ctx: CliContext) -> int:
    """Full pipeline plus the encryption demo"""
    service = ConferenceKeyService(ctx.config)
    with ctx.stage("simulate"):
        session = service.simulate()
    if session.empty:
        raise InfeasibleKeyError("session collected no rounds", session.summary())
    LedgerRepository(ctx.output_dir).save(session.ledger, "ledger")
    with ctx.stage("distill"):
        result = service.distill(session.ledger)

    sections = _distillation_sections(result)
    sections["key"].update(_write_keys(ctx, result))

    image = analysis.placeholder_image()
    demo: Dict = {"image_bits": 8 * len(image.tobytes()), "key_bits": result.key.length}
    if demo["image_bits"] <= result.key.length:
        usage = analysis.KeyUsageLedger(result.key.length)
        with ctx.stage("otp_demo"):
            cipher, offset = analysis.encrypt_image(image, result.key, usage)
            plain = analysis.decrypt_image(cipher, result.key, offset)
        image.save(ctx.output_dir / "demo_plain.png", format="PNG")
        cipher.save(ctx.output_dir / "demo_encrypted.png", format="PNG")
        demo.update(round_trip=plain.tobytes() == image.tobytes(), offset=offset)
    else:
        demo.update(message_demo(result.key))
        if demo["skipped"]:
            sections["warnings"].append("key shorter than one byte; encryption demo skipped")
        else:
            sections["warnings"].append("key shorter than the demo image; encrypted a test message instead")
    sections["key"]["otp_demo"] = demo

    report = ctx.report(session=session.summary(), **sections)
    ctx.write_report(report, ctx.config.output.report_name)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[CliContext], int]] = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "postprocess": cmd_postprocess,
    "keyrate": cmd_keyrate,
    "sweep": cmd_sweep,
    "surface": cmd_surface,
    "encrypt": cmd_encrypt,
    "decrypt": cmd_decrypt,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override a configuration value")
    common.add_argument("--seed", type=int, help="experiment seed")
    common.add_argument("--output-dir", type=Path, help="directory for reports and records")
    common.add_argument("--timing", action="store_true", help="add stage timings to the report")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="confkeybench", description="N-party conference key agreement simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate one session and store its ledger")
    p.add_argument("--ledger", help="ledger record name or path")
    p.add_argument("--export-json", action="store_true", help="also export the ledger as JSON")

    for name, text in (("estimate", "estimate error rates from a ledger"),
                       ("postprocess", "distill a conference key from a ledger")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--ledger", required=True, help="ledger record name or path")

    p = sub.add_parser("keyrate", parents=[common], help="evaluate asymptotic and finite-key rates")
    p.add_argument("--qx", type=float)
    p.add_argument("--qber", type=float)
    p.add_argument("--rounds", "-L", dest="rounds", type=int, help="total rounds L")
    p.add_argument("--p", type=float, help="type-2 probability")
    p.add_argument("--m", type=int, help="type-2 rounds (default round(pL))")
    p.add_argument("--n", type=int, help="key rounds (with --m and no -L, L = n + 2m)")
    p.add_argument("--parties", "-N", dest="parties", type=int)
    p.add_argument("--eps-tot", type=float)
    p.add_argument("--eps-ec", type=float)
    p.add_argument("--eps-pa", type=float)
    p.add_argument("--mode", choices=[m.value for m in LeakageMode], default=LeakageMode.SHANNON.value)
    p.add_argument("--leaked-bits", type=int, help="disclosed EC bits for realized mode")
    p.add_argument("--optimize", action="store_true", help="optimize p and the eps budget")
    p.add_argument("--pairwise", action="store_true", help="compare against XOR-combined two-party keys")

    p = sub.add_parser("sweep", parents=[common], help="batch studies")
    p.add_argument("--study", choices=["finite", "akr", "power"], default="finite")
    p.add_argument("--samples", help="CSV of power_mW,q_x,qber for the power study")

    p = sub.add_parser("surface", parents=[common], help="topology noise surface")
    p.add_argument("--c", type=float, action="append", help="total Bob-link noise (repeatable)")

    p = sub.add_parser("encrypt", parents=[common], help="one-time-pad encrypt with a conference key")
    p.add_argument("--key", required=True)
    p.add_argument("--input")
    p.add_argument("--output", required=True)
    p.add_argument("--image", action="store_true", help="treat --input as an image")
    p.add_argument("--demo-image", action="store_true", help="encrypt the built-in placeholder image")

    p = sub.add_parser("decrypt", parents=[common], help="one-time-pad decrypt")
    p.add_argument("--key", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--offset", type=int, help="key offset (read from the sidecar by default)")

    sub.add_parser("report", parents=[common], help="full pipeline, encryption demo and report")
    return parser


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point

    Returns:
        0 on success, 2 for configuration errors, 3 when no key can be
        produced or used, 4 for error-correction failures, 1 otherwise
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or settings.log_level)

    try:
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        config = load_config(args.config, overrides)
        if args.command == "encrypt" and not (args.input or args.demo_image):
            raise ConfigurationError("encrypt needs --input or --demo-image")

        logger.info(
            "ConfKeyBench started",
            command=args.command,
            environment=settings.environment,
            seed=config.seed,
            version=__version__,
        )
        return COMMANDS[args.command](CliContext(args, config))
    except ConferenceKeyError as e:
        code = exit_code_for(e)
        logger.error("Command failed", command=args.command, error=type(e).__name__,
                     reason=e.message, exit_code=code, details=e.details)
        print(f"error: {e.message}", file=sys.stderr)
        return code
    except OSError as e:
        logger.error("Command failed", command=args.command, error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
