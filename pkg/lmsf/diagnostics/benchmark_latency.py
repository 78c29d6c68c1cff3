import logging
import time
from typing import Optional

import numpy as np
from pydantic import BaseModel
from threadpoolctl import threadpool_limits
from tqdm import tqdm

from lmsf.core_processes.model_assembly.lmsf_forward import lmsf_forward
from lmsf.core_processes.model_assembly.lmsf_model import LmsfModel
from lmsf.utilities.lmsf_exceptions import ContractViolationException

logger = logging.getLogger(__name__)

MINIMUM_BENCHMARK_RUNS = 10
WARMUP_RUNS = 5
BENCHMARK_WORKER_THREADS = 1


class LatencyReport(BaseModel):
    form: str
    input_size: int
    runs: int
    warmup_runs: int
    median_ms: float
    p90_ms: float
    fps: float
    worker_threads: int = BENCHMARK_WORKER_THREADS

    def as_text(self) -> str:
        return (
            f"{self.form} form @ {self.input_size}x{self.input_size}, batch 1, {self.runs} runs "
            f"(+{self.warmup_runs} warmup, {self.worker_threads} worker thread): "
            f"median {self.median_ms:.2f} ms, p90 {self.p90_ms:.2f} ms, {self.fps:.2f} FPS"
        )


def benchmark_latency(
    model: LmsfModel,
    runs: int,
    input_size: Optional[int] = None,
    seed: int = 0,
    use_tqdm: bool = True,
) -> LatencyReport:
    """
    Wall-clock a batch-1 forward `runs` times after a fixed warmup. FPS = 1000 / median latency in ms.
    BLAS and OpenMP pools are held to one worker thread for the warmup and the timed loop.
    """
    if runs < MINIMUM_BENCHMARK_RUNS:
        raise ContractViolationException(f"benchmarking needs at least {MINIMUM_BENCHMARK_RUNS} runs, got {runs}")
    input_size = input_size or model.config.input_size
    image = np.random.default_rng(seed).random((1, 3, input_size, input_size), dtype=np.float32)

    timed_runs = range(runs)
    if use_tqdm:
        timed_runs = tqdm(timed_runs, desc=f"benchmarking {model.form} form", leave=False)

    latencies_ms = []
    with threadpool_limits(limits=BENCHMARK_WORKER_THREADS):
        for _ in range(WARMUP_RUNS):
            lmsf_forward(model, image)
        for _ in timed_runs:
            start = time.perf_counter()
            lmsf_forward(model, image)
            latencies_ms.append((time.perf_counter() - start) * 1000.0)

    median_ms = float(np.median(latencies_ms))
    report = LatencyReport(
        form=model.form,
        input_size=input_size,
        runs=runs,
        warmup_runs=WARMUP_RUNS,
        median_ms=median_ms,
        p90_ms=float(np.percentile(latencies_ms, 90)),
        fps=1000.0 / median_ms,
        worker_threads=BENCHMARK_WORKER_THREADS,
    )
    logger.info(report.as_text())
    return report
