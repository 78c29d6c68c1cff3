import pytest
from threadpoolctl import threadpool_info

from lmsf.diagnostics import benchmark_latency as benchmark_latency_module
from lmsf.diagnostics.benchmark_latency import (
    BENCHMARK_WORKER_THREADS,
    MINIMUM_BENCHMARK_RUNS,
    WARMUP_RUNS,
    benchmark_latency,
)
from lmsf.utilities.lmsf_exceptions import ContractViolationException


def test_too_few_runs_are_rejected(small_deploy_model):
    with pytest.raises(ContractViolationException, match=str(MINIMUM_BENCHMARK_RUNS)):
        benchmark_latency(small_deploy_model, runs=MINIMUM_BENCHMARK_RUNS - 1, use_tqdm=False)


@pytest.mark.parametrize("model_fixture", ["small_train_model", "small_deploy_model"])
def test_latency_report_fields(request, model_fixture):
    model = request.getfixturevalue(model_fixture)
    report = benchmark_latency(model, runs=MINIMUM_BENCHMARK_RUNS, use_tqdm=False)
    assert report.form == model.form
    assert report.input_size == model.config.input_size
    assert (report.runs, report.warmup_runs) == (MINIMUM_BENCHMARK_RUNS, WARMUP_RUNS)
    assert 0 < report.median_ms <= report.p90_ms
    assert report.fps == pytest.approx(1000.0 / report.median_ms)
    assert "FPS" in report.as_text()


def test_benchmark_input_size_can_be_overridden(small_deploy_model):
    report = benchmark_latency(small_deploy_model, runs=MINIMUM_BENCHMARK_RUNS, input_size=32, use_tqdm=False)
    assert report.input_size == 32


def test_deploy_form_is_not_slower_than_train_form(small_train_model, small_deploy_model):
    train_report = benchmark_latency(small_train_model, runs=30, use_tqdm=False)
    deploy_report = benchmark_latency(small_deploy_model, runs=30, use_tqdm=False)
    assert deploy_report.median_ms <= 1.05 * train_report.median_ms, (
        f"deploy {deploy_report.median_ms:.3f} ms vs train {train_report.median_ms:.3f} ms"
    )


def test_benchmark_runs_every_forward_on_one_worker_thread(small_deploy_model, monkeypatch):
    forward = benchmark_latency_module.lmsf_forward
    thread_counts = []

    def counting_forward(model, image):
        thread_counts.extend(pool["num_threads"] for pool in threadpool_info())
        return forward(model, image)

    monkeypatch.setattr(benchmark_latency_module, "lmsf_forward", counting_forward)
    report = benchmark_latency(small_deploy_model, runs=MINIMUM_BENCHMARK_RUNS, use_tqdm=False)
    assert report.worker_threads == BENCHMARK_WORKER_THREADS == 1
    assert all(count == 1 for count in thread_counts), f"worker threads seen during the benchmark: {thread_counts}"
