"""
Measure LDPC code-rate thresholds for the rate table
Run: python scripts/measure_thresholds.py --block-length 6480 --blocks 100

For every supported rate, walks a grid of BSC crossover probabilities
and keeps the largest one at which all sampled blocks decode. The
result is written in the format of app/data/rate_thresholds.json.
"""
import argparse
import json
import sys
from datetime import date
from pathlib import Path
from typing import Dict, List

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from app.config import settings  # noqa: E402
from app.constants import SUPPORTED_CODE_RATES  # noqa: E402
from app.services.postprocess import CodeLibrary, decode, syndrome  # noqa: E402
from app.utils.work_pool import run_jobs, spawn_generators  # noqa: E402


def frame_errors(code, crossover: float, blocks: int, seed: int, max_iters: int) -> int:
    """Failed decodes out of ``blocks`` random blocks"""
    rngs = spawn_generators(seed, blocks)

    def one(rng: np.random.Generator) -> bool:
        alice = rng.integers(0, 2, size=code.block_j, dtype=np.uint8)
        flips = (rng.random(code.block_j) < crossover).astype(np.uint8)
        result = decode(code, alice ^ flips, syndrome(code, alice), max_iters, crossover)
        return result.success and np.array_equal(result.bits, alice)

    return sum(not ok for ok in run_jobs(one, rngs))


def measure(block_length: int, blocks: int, step: float, seed: int, max_iters: int) -> List[Dict]:
    library = CodeLibrary()
    thresholds = []
    for rate in SUPPORTED_CODE_RATES:
        code = library.get(rate, block_length)
        best = 0.0
        crossover = step
        print(f"Rate {rate} ({code.construction_id})")
        while crossover < 0.5:
            failures = frame_errors(code, crossover, blocks, seed, max_iters)
            print(f"  q={crossover:.4f}  failures={failures}/{blocks}")
            if failures:
                break
            best = crossover
            crossover = round(crossover + step, 6)
        thresholds.append({"rate": rate, "max_qber": best})
    thresholds.sort(key=lambda t: t["max_qber"])
    return thresholds


def main() -> int:
    parser = argparse.ArgumentParser(description="Measure code-rate thresholds")
    parser.add_argument("--block-length", type=int, default=settings.ldpc_test_block_length)
    parser.add_argument("--blocks", type=int, default=100)
    parser.add_argument("--step", type=float, default=0.0025)
    parser.add_argument("--seed", type=int, default=settings.default_seed)
    parser.add_argument("--max-iterations", type=int, default=settings.ldpc_max_iterations)
    parser.add_argument("--margin", type=float, default=0.0)
    parser.add_argument("--output", type=Path, default=Path("rate_thresholds.json"))
    args = parser.parse_args()

    thresholds = measure(args.block_length, args.blocks, args.step, args.seed, args.max_iterations)
    table = {
        "version": f"{date.today():%Y.%m}-qc-ira-w3",
        "block_length": args.block_length,
        "blocks_per_point": args.blocks,
        "margin": args.margin,
        "thresholds": thresholds,
    }
    args.output.write_text(json.dumps(table, indent=2) + "\n", encoding="utf-8")
    print(f"\nThresholds written to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
