import time
from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from clmi3d.autodiff import functional as F
from clmi3d.autodiff.tensor import Tensor, backward

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def projected_loss(out: Tensor, seed: int = 1234) -> Tensor:
    """sum(out * R) for a fixed random R, so every output element matters."""
    r = np.random.default_rng(seed).standard_normal(out.shape)
    return F.sum(F.mul(out, Tensor(r)))


def grad_check(fn, inputs: dict[str, np.ndarray], step: float = 1e-4) -> dict[str, float]:
    """Relative error between backprop and central differences for every input.

    ``fn(**tensors)`` must return a scalar Tensor. Error per input is
    ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12).
    """
    leaves = {k: Tensor(np.array(v, dtype=np.float64), requires_grad=True) for k, v in inputs.items()}
    loss = fn(**leaves)
    backward(loss)
    errors = {}
    for name, leaf in leaves.items():
        analytic = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad
        numeric = np.zeros_like(leaf.data)
        base = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
        flat = base[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            plus = float(fn(**{k: Tensor(v) for k, v in base.items()}).data)
            flat[i] = orig - step
            minus = float(fn(**{k: Tensor(v) for k, v in base.items()}).data)
            flat[i] = orig
            numeric.reshape(-1)[i] = (plus - minus) / (2 * step)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
        errors[name] = float(np.linalg.norm(analytic - numeric) / denom)
    return errors


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# acceptance criterion number -> (title, passed, detail, seconds)
ACCEPTANCE: dict[int, tuple[str, bool, str, float]] = {}


@contextmanager
def criterion(number: int, title: str, budget_seconds: float):
    """Record one acceptance criterion; it fails if the block raises or overruns its budget.

    The block may yield details by appending strings to the returned list.
    """
    details: list[str] = []
    t0 = time.perf_counter()
    try:
        yield details
    except BaseException as e:
        ACCEPTANCE[number] = (title, False, f"{type(e).__name__}: {e}".splitlines()[0], time.perf_counter() - t0)
        raise
    elapsed = time.perf_counter() - t0
    ok = elapsed < budget_seconds
    if not ok:
        details.append(f"runtime {elapsed:.1f}s over budget {budget_seconds:.0f}s")
    ACCEPTANCE[number] = (title, ok, "; ".join(details), elapsed)
    assert ok, details[-1]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail, seconds = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title} ({seconds:.1f}s) {detail}")
