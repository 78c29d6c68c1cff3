import logging
from typing import Callable, Tuple

import numpy as np
from pydantic import BaseModel
from tqdm import tqdm

logger = logging.getLogger(__name__)

DEFAULT_CERTIFICATE_TRIALS = 100
DEFAULT_CERTIFICATE_TOLERANCE = 1e-4


class EquivalenceReport(BaseModel):
    name: str = ""
    max_abs_diff: float
    passed: bool
    trials: int
    tolerance: float
    input_shape: Tuple[int, ...]

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"[{verdict}] {self.name or 'equivalence'}: max |train - deploy| = {self.max_abs_diff:.3e} "
            f"(tolerance {self.tolerance:.1e}, {self.trials} trials, input {self.input_shape})"
        )


def certify_equivalence(
    train_form: Callable[[np.ndarray], np.ndarray],
    deploy_form: Callable[[np.ndarray], np.ndarray],
    input_shape: Tuple[int, ...],
    trials: int = DEFAULT_CERTIFICATE_TRIALS,
    tolerance: float = DEFAULT_CERTIFICATE_TOLERANCE,
    seed: int = 0,
    name: str = "",
    use_tqdm: bool = False,
) -> EquivalenceReport:
    """
    Evaluate both callables on `trials` standard-normal inputs and report the worst absolute difference.

    A failed comparison is reported with `passed=False`; it never raises.
    """
    random_number_generator = np.random.default_rng(seed)
    max_abs_diff = 0.0

    trial_iterator = range(trials)
    if use_tqdm:
        trial_iterator = tqdm(trial_iterator, desc=f"certifying {name or 'equivalence'}", leave=False)

    for _ in trial_iterator:
        x = random_number_generator.standard_normal(input_shape).astype(np.float32)
        train_output = np.asarray(train_form(x), dtype=np.float32)
        deploy_output = np.asarray(deploy_form(x), dtype=np.float32)
        if train_output.shape != deploy_output.shape:
            logger.warning(
                f"{name}: output shapes differ, train {train_output.shape} vs deploy {deploy_output.shape}"
            )
            max_abs_diff = float("inf")
            break
        difference = np.abs(train_output.astype(np.float64) - deploy_output.astype(np.float64))
        if not np.all(np.isfinite(difference)):
            max_abs_diff = float("inf")
            break
        max_abs_diff = max(max_abs_diff, float(difference.max(initial=0.0)))

    report = EquivalenceReport(
        name=name,
        max_abs_diff=max_abs_diff,
        passed=max_abs_diff <= tolerance,
        trials=trials,
        tolerance=tolerance,
        input_shape=tuple(input_shape),
    )
    if report.passed:
        logger.success(report.summary())
    else:
        logger.warning(report.summary())
    return report
