"""
Batch studies and the encryption demo

AKR-versus-loss table, finite-key sweep, topology noise surface and
power-trend fit, plus one-time-pad encryption with a persisted
key-usage ledger and CSV/JSON/gnuplot writers.
"""
import csv
import json
import math
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from scipy import linalg

from app.constants import (
    DEMO_IMAGE_SIZE,
    MEASURED_TOPOLOGIES,
    REFERENCE_QBER,
    REFERENCE_QX,
)
from app.core.exceptions import (
    ConferenceKeyError,
    KeyExhaustedError,
    KeyReuseError,
    RecordFormatError,
    ValidationError,
)
from app.models.keys import ConferenceKey
from app.models.schemas import ExperimentConfig
from app.services.keyrate import (
    RateInputs,
    SecurityBudget,
    akr,
    finite_key_length,
)
from app.services.network_sim import (
    SwitchingModel,
    Topology,
    adjusted_rate,
    generation_rate,
    total_loss_db,
)
from app.services.noise_model import qber_symmetric_minimum, qx_from_visibility
from app.utils.bits import bits_to_bytes
from app.utils.logging import get_logger, log_execution_time
from app.utils.work_pool import run_jobs, spawn_seeds

logger = get_logger(__name__)


# -- AKR versus loss -----------------------------------------------------

@dataclass(frozen=True)
class AkrRow:
    topology: str
    loss_db: float
    model_loss_db: float
    g_r_hz: float
    model_g_r_hz: float
    akr: float
    key_rate_hz: float
    switched_rate_hz: float
    switched_key_rate_hz: float
    q_x: float
    qber: float


AKR_COLUMNS = tuple(AkrRow.__dataclass_fields__)


def _label(bob_km: Sequence[float]) -> str:
    return "{" + ",".join(f"{d:g}" for d in bob_km) + "}"


@log_execution_time(logger)
def run_akr_study(
    q_x: float = REFERENCE_QX,
    qber: float = REFERENCE_QBER,
    switching: Optional[SwitchingModel] = None,
    topologies: Iterable[Tuple[Sequence[float], Optional[float], Optional[float]]] = MEASURED_TOPOLOGIES,
    visibility: Optional[float] = None,
) -> List[AkrRow]:
    """
    Asymptotic key rate per topology

    Each topology entry is (Bob fibre km, measured loss dB or None,
    measured g_R Hz or None). Measured values are used when present and
    the loss model fills the gaps; ``key_rate_hz`` = AKR * g_R and the
    switched columns apply the switching-adjusted rate. With
    ``visibility`` set, Q_X is derived from it.
    """
    switching = switching or SwitchingModel()
    if visibility is not None:
        q_x = qx_from_visibility(visibility)
    rate = akr(q_x, qber)

    rows = []
    for bob_km, measured_loss, measured_rate in topologies:
        t = Topology.from_bob_lengths(bob_km)
        model_loss = total_loss_db(t)
        model_rate = generation_rate(t)
        g_r = measured_rate if measured_rate is not None else model_rate
        switched = adjusted_rate(g_r, switching)
        rows.append(AkrRow(
            topology=_label(bob_km),
            loss_db=measured_loss if measured_loss is not None else model_loss,
            model_loss_db=model_loss,
            g_r_hz=g_r,
            model_g_r_hz=model_rate,
            akr=rate,
            key_rate_hz=rate * g_r,
            switched_rate_hz=switched,
            switched_key_rate_hz=rate * switched,
            q_x=q_x,
            qber=qber,
        ))
    logger.info("AKR study completed", topologies=len(rows), akr=round(rate, 6))
    return rows


# -- finite-key sweep ----------------------------------------------------

@dataclass
class SweepPoint:
    L: int
    bound_ell: int
    bound_skr: float
    bound_raw: float
    realized_ell: int
    realized_skr: float
    realized_raw: float
    extracted_bits: int
    leaked_bits: int
    shannon_ec_bits: float
    rate: str = ""
    q_x_m: float = math.nan
    qber_m: float = math.nan
    error: str = ""

    @property
    def feasible(self) -> bool:
        return self.realized_ell > 0


SWEEP_COLUMNS = tuple(SweepPoint.__dataclass_fields__)


def _nominal_bound(L: int, p: float, q_x: float, qber: float, budget: SecurityBudget) -> Tuple[int, float, float]:
    m = max(1, round(p * L))
    if L - 2 * m < 1:
        return 0, 0.0, -math.inf
    result = finite_key_length(
        RateInputs(L=L, n=L - 2 * m, m=m, p=p, q_x_m=q_x, qber_m=qber, N=budget.N), budget
    )
    return result.ell, result.skr, result.raw_length


def _sweep_point(config: ExperimentConfig, L: int, realized: bool) -> SweepPoint:
    from app.services.conference_service import ConferenceKeyService

    service = ConferenceKeyService(config)
    budget = service.budget()
    noise = service.noise()
    ell, skr, raw = _nominal_bound(L, config.protocol.p, noise.q_x, noise.qber(), budget)
    point = SweepPoint(
        L=L, bound_ell=ell, bound_skr=skr, bound_raw=raw,
        realized_ell=0, realized_skr=0.0, realized_raw=-math.inf,
        extracted_bits=0, leaked_bits=0, shannon_ec_bits=math.nan,
    )
    if not realized:
        return point

    try:
        result = service.run().distillation
    except ConferenceKeyError as e:
        point.error = type(e).__name__
        return point

    point.bound_ell = result.bound.ell
    point.bound_skr = result.bound.skr
    point.bound_raw = result.bound.raw_length
    point.realized_ell = result.realized.ell
    point.realized_skr = result.realized.skr
    point.realized_raw = result.realized.raw_length
    point.extracted_bits = result.realized.ell_before_deduction
    point.leaked_bits = int(result.leakage["total_bits"])
    point.shannon_ec_bits = result.bound.ec_bits
    point.rate = result.code["rate"]
    point.q_x_m = result.estimate.q_x_m
    point.qber_m = result.estimate.qber_m
    return point


@log_execution_time(logger)
def run_finite_key_sweep(
    config: ExperimentConfig,
    l_values: Optional[Sequence[int]] = None,
    realized: Optional[bool] = None,
) -> List[SweepPoint]:
    """
    Finite-key length versus L

    Every L runs as an isolated job with its own seed spawned from
    ``config.seed``: the full simulate-estimate-correct-extract pipeline
    (realized leakage) next to the Shannon-leakage bound from the same
    estimates. Points that abort keep a zero key and the error name.
    The pre-shared deduction is reported, never enforced, so points
    below key-growing size still show their extracted length.
    """
    l_values = list(l_values or config.sweep.l_values)
    if any(b <= a for a, b in zip(l_values, l_values[1:])):
        raise ValidationError("L values must be strictly ascending", {"l_values": l_values})
    realized = config.sweep.realized if realized is None else realized
    seeds = spawn_seeds(config.seed, len(l_values))

    def job(item: Tuple[int, int]) -> SweepPoint:
        L, seed = item
        point_config = config.model_copy(deep=True, update={"seed": seed})
        point_config.protocol = point_config.protocol.model_copy(
            update={"rounds": L, "duration_s": None, "require_key_growing": False}
        )
        return _sweep_point(point_config, L, realized)

    points = run_jobs(job, list(zip(l_values, seeds)))
    logger.info(
        "Finite-key sweep completed",
        points=len(points),
        feasible=sum(p.feasible for p in points),
    )
    return points


# -- topology noise surface ---------------------------------------------

def surface_value(p1, p2, c: float):
    """Q_X with p_A = 0 and p3 = c - p1 - p2"""
    p3 = c - p1 - p2
    return 0.5 * (1.0 - (1.0 - p1) * (1.0 - p2) * (1.0 - p3))


def surface_gradient(p1, p2, c: float):
    """Analytic partial derivatives of :func:`surface_value`"""
    d1 = 0.5 * (p2 - 1.0) * (c - 2.0 * p1 - p2)
    d2 = 0.5 * (p1 - 1.0) * (c - p1 - 2.0 * p2)
    return d1, d2


@dataclass
class NoiseSurface:
    c: float
    grid: np.ndarray
    values: np.ndarray
    grad_p1: np.ndarray
    grad_p2: np.ndarray
    argmin: Tuple[float, float]
    minimum: float
    qber_minimum: float

    def rows(self) -> List[Dict[str, float]]:
        out = []
        for i, p1 in enumerate(self.grid):
            for j, p2 in enumerate(self.grid):
                if np.isfinite(self.values[i, j]):
                    out.append({
                        "c": self.c,
                        "p1": float(p1),
                        "p2": float(p2),
                        "p3": float(self.c - p1 - p2),
                        "q_x": float(self.values[i, j]),
                        "grad_p1": float(self.grad_p1[i, j]),
                        "grad_p2": float(self.grad_p2[i, j]),
                    })
        return out

    def summary(self) -> Dict[str, Any]:
        return {
            "c": self.c,
            "argmin": list(self.argmin),
            "minimum_q_x": self.minimum,
            "qber_symmetric_minimum": self.qber_minimum,
            "grid_points": int(np.isfinite(self.values).sum()),
        }


SURFACE_COLUMNS = ("c", "p1", "p2", "p3", "q_x", "grad_p1", "grad_p2")


def topology_noise_surface(c: float, grid_step: float = 0.01) -> NoiseSurface:
    """
    Q_X over the (p1, p2) grid for a fixed total Bob-link noise ``c``

    Points whose p3 falls outside [0, 1] are masked (NaN).
    """
    if not 0.0 <= c <= 3.0:
        raise ValidationError("total noise c must lie in [0, 3]", {"c": c})
    if not 0.0 < grid_step <= 0.5:
        raise ValidationError("grid_step must lie in (0, 0.5]", {"grid_step": grid_step})

    grid = np.round(np.arange(0.0, 1.0 + grid_step / 2.0, grid_step), 12)
    P1, P2 = np.meshgrid(grid, grid, indexing="ij")
    p3 = c - P1 - P2
    feasible = (p3 >= -1e-12) & (p3 <= 1.0 + 1e-12)

    values = np.where(feasible, surface_value(P1, P2, c), np.nan)
    d1, d2 = surface_gradient(P1, P2, c)
    grad_p1 = np.where(feasible, d1, np.nan)
    grad_p2 = np.where(feasible, d2, np.nan)

    i, j = np.unravel_index(np.nanargmin(values), values.shape)
    return NoiseSurface(
        c=c,
        grid=grid,
        values=values,
        grad_p1=grad_p1,
        grad_p2=grad_p2,
        argmin=(float(grid[i]), float(grid[j])),
        minimum=float(values[i, j]),
        qber_minimum=qber_symmetric_minimum(c, 3),
    )


# -- power trend ---------------------------------------------------------

@dataclass(frozen=True)
class PowerTrendFit:
    qx_slope: float
    qx_intercept: float
    qber_slope: float
    qx_residual_std: float
    qber_residual_std: float
    n_samples: int

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def fit_power_trend(samples: Sequence[Tuple[float, float, float]]) -> PowerTrendFit:
    """
    Least-squares trends of (power_mW, q_x, qber) samples

    Q_X gets an affine fit; QBER is fitted through the origin.

    Raises:
        ValidationError: Fewer than two distinct powers
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise ValidationError("samples must be (power_mW, q_x, qber) triples")
    power, q_x, qber = data.T
    if np.unique(power).size < 2:
        raise ValidationError("need at least two distinct powers", {"powers": np.unique(power).tolist()})

    affine = np.column_stack((power, np.ones_like(power)))
    (qx_slope, qx_intercept), _, rank, _ = linalg.lstsq(affine, q_x)
    if rank < 2:
        raise ValidationError("degenerate design matrix for the Q_X fit")
    (qber_slope,), _, _, _ = linalg.lstsq(power[:, None], qber)

    dof = max(1, power.size - 2)
    qx_resid = q_x - (qx_slope * power + qx_intercept)
    qber_resid = qber - qber_slope * power
    return PowerTrendFit(
        qx_slope=float(qx_slope),
        qx_intercept=float(qx_intercept),
        qber_slope=float(qber_slope),
        qx_residual_std=float(np.sqrt(np.sum(qx_resid ** 2) / dof)),
        qber_residual_std=float(np.sqrt(np.sum(qber_resid ** 2) / max(1, power.size - 1))),
        n_samples=int(power.size),
    )


# -- one-time pad --------------------------------------------------------

class KeyUsageLedger:
    """
    Spent ranges of one key, persisted as JSON next to the key file

    Ranges are consumed strictly in order; ``next_offset`` never moves
    backwards.
    """

    def __init__(self, key_bits: int, path: Optional[Path] = None, key_id: str = ""):
        self.key_bits = int(key_bits)
        self.path = Path(path) if path is not None else None
        self.key_id = key_id
        self.spent: List[Tuple[int, int]] = []
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    @classmethod
    def for_key_file(cls, key_path: Path, key_bits: int) -> "KeyUsageLedger":
        key_path = Path(key_path)
        return cls(key_bits, key_path.with_suffix(".usage.json"), key_id=key_path.stem)

    @property
    def next_offset(self) -> int:
        return self.spent[-1][1] if self.spent else 0

    @property
    def remaining(self) -> int:
        return self.key_bits - self.next_offset

    def reserve(self, n_bits: int, offset: Optional[int] = None) -> int:
        """
        Mark [offset, offset + n_bits) spent

        Raises:
            KeyReuseError: Range starts below the next unused bit
            KeyExhaustedError: Range runs past the end of the key
        """
        with self._lock:
            start = self.next_offset if offset is None else int(offset)
            if start < self.next_offset:
                raise KeyReuseError(
                    "key range already spent",
                    {"offset": start, "next_offset": self.next_offset}
                )
            if start + n_bits > self.key_bits:
                raise KeyExhaustedError(
                    "not enough unused key bits",
                    {"requested": n_bits, "offset": start, "key_bits": self.key_bits}
                )
            if n_bits > 0:
                self.spent.append((start, start + n_bits))
                self._save()
            return start

    def _load(self):
        try:
            data = json.loads(self.path.read_text(encoding="utf-8"))
            spent = [(int(a), int(b)) for a, b in data["spent"]]
        except (OSError, KeyError, TypeError, ValueError) as e:
            raise RecordFormatError(f"Corrupt key-usage ledger {self.path}: {e}", {"path": str(self.path)})
        if int(data.get("key_bits", self.key_bits)) != self.key_bits:
            raise RecordFormatError("usage ledger belongs to a key of another length", {"path": str(self.path)})
        if any(b <= a for a, b in spent) or any(c < b for (_, b), (c, _) in zip(spent, spent[1:])):
            raise RecordFormatError("usage ledger ranges are not monotone", {"path": str(self.path)})
        self.spent = spent

    def _save(self):
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"key_id": self.key_id, "key_bits": self.key_bits, "spent": self.spent}
        self.path.write_text(json.dumps(payload, indent=2), encoding="utf-8")


def _keystream(key: ConferenceKey, offset: int, n_bytes: int) -> np.ndarray:
    bits = key.shared()[offset:offset + 8 * n_bytes]
    return np.frombuffer(bits_to_bytes(bits), dtype=np.uint8)


def otp_encrypt(
    message: bytes,
    key: ConferenceKey,
    usage: KeyUsageLedger,
    offset: Optional[int] = None,
) -> Tuple[bytes, int]:
    """
    XOR ``message`` with unused key bits

    Returns:
        (ciphertext, offset of the consumed key range)
    """
    if usage.key_bits != key.length:
        raise ValidationError("usage ledger does not match the key", {"ledger": usage.key_bits, "key": key.length})
    start = usage.reserve(8 * len(message), offset)
    if not message:
        return b"", start
    stream = _keystream(key, start, len(message))
    cipher = np.frombuffer(message, dtype=np.uint8) ^ stream
    logger.info("Message encrypted", bytes=len(message), offset=start, remaining_bits=usage.remaining)
    return cipher.tobytes(), start


def otp_decrypt(ciphertext: bytes, key: ConferenceKey, offset: int) -> bytes:
    """Inverse of :func:`otp_encrypt` for the range starting at ``offset``"""
    if offset < 0 or offset + 8 * len(ciphertext) > key.length:
        raise KeyExhaustedError(
            "ciphertext runs past the end of the key",
            {"offset": offset, "bytes": len(ciphertext), "key_bits": key.length}
        )
    if not ciphertext:
        return b""
    stream = _keystream(key, offset, len(ciphertext))
    return (np.frombuffer(ciphertext, dtype=np.uint8) ^ stream).tobytes()


def placeholder_image(width: int = DEMO_IMAGE_SIZE[0], height: int = DEMO_IMAGE_SIZE[1]) -> Image.Image:
    """License-free RGB gradient test image"""
    if width < 1 or height < 1:
        raise ValidationError("image dimensions must be positive", {"width": width, "height": height})
    y, x = np.mgrid[0:height, 0:width]
    red = (255 * x / max(1, width - 1)).astype(np.uint8)
    green = (255 * y / max(1, height - 1)).astype(np.uint8)
    blue = ((x + y) % 64 * 4).astype(np.uint8)
    return Image.fromarray(np.dstack((red, green, blue)))


def encrypt_image(image: Image.Image, key: ConferenceKey, usage: KeyUsageLedger) -> Tuple[Image.Image, int]:
    """One-time-pad the raw pixels; the result is a viewable noise image"""
    image = image.convert("RGB")
    cipher, offset = otp_encrypt(image.tobytes(), key, usage)
    return Image.frombytes("RGB", image.size, cipher), offset


def decrypt_image(image: Image.Image, key: ConferenceKey, offset: int) -> Image.Image:
    plain = otp_decrypt(image.tobytes(), key, offset)
    return Image.frombytes("RGB", image.size, plain)


# -- writers -------------------------------------------------------------

def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_csv(rows: Sequence[Any], columns: Sequence[str], path: Path) -> Path:
    """Rows (dataclasses or dicts) in a fixed column order"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            data = row if isinstance(row, dict) else asdict(row)
            writer.writerow([_format_cell(data[c]) for c in columns])
    return path


def _format_cell(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def sanitize(data):
    """Replace non-finite floats by None and numpy scalars by Python ones"""
    if isinstance(data, dict):
        return {str(k): sanitize(v) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [sanitize(v) for v in data]
    return _jsonable(data)


def write_json(data: Any, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(sanitize(data), indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path


@dataclass
class PlotSpec:
    """One gnuplot figure over a CSV table"""
    title: str
    x_column: str
    y_columns: List[str]
    x_label: str = ""
    y_label: str = ""
    log_x: bool = False
    extra: List[str] = field(default_factory=list)


AKR_PLOT = PlotSpec("AKR versus loss", "loss_db", ["key_rate_hz", "switched_key_rate_hz"],
                    x_label="loss (dB)", y_label="key rate (bit/s)")
SWEEP_PLOT = PlotSpec("Finite-key rate versus rounds", "L", ["bound_skr", "realized_skr"],
                      x_label="L (rounds)", y_label="secret key rate (bit/round)", log_x=True)
SURFACE_PLOT = PlotSpec("Q_X over the (p1, p2) grid", "p1", ["q_x"],
                        x_label="p1", y_label="Q_X", extra=["set view map"])
POWER_PLOT = PlotSpec("Noise versus pump power", "power_mW", ["q_x", "qber"],
                      x_label="pump power (mW)", y_label="error rate")


def write_gnuplot_script(csv_path: Path, columns: Sequence[str], plot: PlotSpec) -> Path:
    """gnuplot script next to ``csv_path`` that renders it to PNG"""
    csv_path = Path(csv_path)
    index = {name: i + 1 for i, name in enumerate(columns)}
    x = index[plot.x_column]
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,600",
        f"set output '{csv_path.with_suffix('.png').name}'",
        f"set title '{plot.title}'",
        f"set xlabel '{plot.x_label or plot.x_column}'",
        f"set ylabel '{plot.y_label}'",
    ]
    if plot.log_x:
        lines.append("set logscale x")
    lines.extend(plot.extra)
    plots = [f"'{csv_path.name}' using {x}:{index[y]} with linespoints" for y in plot.y_columns]
    lines.append("plot " + ", \\\n     ".join(plots))
    script = csv_path.with_suffix(".gp")
    script.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return script


def write_table(rows: Sequence[Any], columns: Sequence[str], path: Path, plot: Optional[PlotSpec] = None) -> List[Path]:
    """CSV table plus its gnuplot script"""
    written = [write_csv(rows, columns, path)]
    if plot is not None:
        written.append(write_gnuplot_script(path, columns, plot))
    return written
