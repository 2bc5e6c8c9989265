"""Shared fixtures: small simulated datasets reused across test modules."""
import pytest

from declick.clicklog import ExamModel, SimConfig, simulate_logs


@pytest.fixture(scope="session")
def small_sim():
    """A small biased log with ground truth (40 queries x 10 x 15)."""
    cfg = SimConfig(n_queries=40, docs_per_query=10, impressions_per_query=15,
                    positions=10, exam_model=ExamModel.window(3, 0.95, 0.05),
                    seed=7)
    return simulate_logs(cfg)


@pytest.fixture(scope="session")
def tiny_sim():
    """A very small log for fast smoke tests (8 queries x 5 x 6)."""
    cfg = SimConfig(n_queries=8, docs_per_query=5, impressions_per_query=6,
                    positions=5, exam_model=ExamModel.rank_decay(1.0), seed=3)
    return simulate_logs(cfg)
