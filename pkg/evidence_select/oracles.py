"""Brute-force and finite-difference oracle suites.

Each suite draws seeded random instances, checks a property against an
exhaustive or numerical reference and counts violations. The ``oracle``
subcommand and the test-suite both run these.
"""

import itertools
import logging
import math
import time
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import coverage, predictor, recovery, rng
from .constants import DEFAULT_SEED, INJECTION_MODES
from .coverage import ClassAnchorWeights
from .diagnostics import audits
from .errors import UndefinedCurvatureError
from .grounding import GroundingParams
from .model import ModelState
from .predictor import PredictorParams
from .recovery import RecoveryConfig
from .selector import SelectorParams
from .synthbag import AnchorBank, Bag, gram_schmidt
from .training import TrainConfig, composite_loss


logger = logging.getLogger(__name__)

FD_STEP = 1e-5
MARGINAL_STEP = 1e-4


@dataclass
class OracleResult:
    name: str
    checked: int
    violations: int
    worst: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> Dict:
        """Serializable record, without wall-clock time."""
        record = {k: v for k, v in asdict(self).items() if k != "seconds"}
        return {**record, "passed": self.passed}


def relative_error(a, b, floor: float = 1e-10) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), floor)
    return float(np.linalg.norm(a - b)) / scale


def random_instance(gen: np.random.Generator, n: int, m: int):
    """Responses in (0, 1) and nonnegative weights, some anchors left sparse."""
    R = gen.uniform(0.0, 1.0, (n, m)) * (gen.random((n, m)) < 0.7)
    alpha = gen.uniform(0.0, 2.0, m)
    return R, alpha


def uncovered_mass(pi, R, alpha) -> float:
    """sum_m alpha_m prod_i (1 - pi_i r_im), equal to sum(alpha) - U_c(pi)."""
    pi = np.asarray(pi, dtype=np.float64)
    logs = np.log1p(-pi[:, None] * np.asarray(R, dtype=np.float64)).sum(axis=0)
    return float(np.dot(np.asarray(alpha, dtype=np.float64), np.exp(logs)))


def exhaustive_max(R: np.ndarray, alpha: np.ndarray, k: int) -> float:
    n = R.shape[0]
    return max(coverage.subset_utility(s, R, alpha) for s in itertools.combinations(range(n), k))


def random_bag(gen: np.random.Generator, n: int, d: int, num_classes: int, bag_id: str = "oracle") -> Bag:
    return Bag(
        id=bag_id,
        features=gen.normal(0.0, 1.0, (n, d)),
        coords=gen.uniform(0.0, 1.0, (n, 2)),
        label=int(gen.integers(num_classes)),
        planted=[],
        split="train",
    )


def random_state(gen: np.random.Generator, d: int, num_classes: int, num_anchors: int,
                 hidden: int = 5, rank: int = 2, mode: str = "attention_bias",
                 bridge_input: str = "raw") -> ModelState:
    """Small model with every parameter drawn away from its initialization."""
    return ModelState(
        predictor=PredictorParams(
            W1=gen.normal(0.0, 0.7, (hidden, d)),
            w2=gen.normal(0.0, 0.7, hidden),
            Wc=gen.normal(0.0, 0.7, (num_classes, d)),
            b=gen.normal(0.0, 0.3, num_classes),
        ),
        grounding=GroundingParams(
            U=gen.normal(0.0, 0.3, (d, rank)),
            V=gen.normal(0.0, 0.3, (d, rank)),
            B=np.eye(d) + gen.normal(0.0, 0.2, (d, d)),
            bridge_input=bridge_input,
        ),
        selector=SelectorParams(
            W=gen.normal(0.0, 0.7, (hidden, d + 2)),
            c=gen.normal(0.0, 0.3, hidden),
            v=gen.normal(0.0, 0.7, hidden),
            o=gen.normal(0.0, 0.3, 1),
        ),
        weights=ClassAnchorWeights(raw=gen.normal(0.0, 1.0, (num_classes, num_anchors))),
        anchors=AnchorBank(
            anchors=gram_schmidt(gen.standard_normal((num_anchors, d))),
            names=[f"a{m}" for m in range(num_anchors)],
        ),
        mode=mode,
    )


def numerical_gradient(fn: Callable[[], float], array: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of ``fn`` with respect to every entry of ``array`` (perturbed in place)."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for j in range(flat.size):
        saved = flat[j]
        flat[j] = saved + step
        plus = fn()
        flat[j] = saved - step
        minus = fn()
        flat[j] = saved
        out[j] = (plus - minus) / (2.0 * step)
    return grad


def _timed(name: str, body: Callable[[], tuple]) -> OracleResult:
    start = time.perf_counter()
    checked, violations, worst = body()
    result = OracleResult(name, checked, violations, worst, time.perf_counter() - start)
    logger.info("oracle %s: %d checked, %d violations", name, checked, violations)
    return result


def submodularity_suite(trials: int = 10_000, seed: int = DEFAULT_SEED) -> OracleResult:
    """Diminishing returns and monotonicity on random S subset T, i outside T."""
    def body():
        gen = rng.stream(seed, rng.PROBE, "submodularity")
        violations, worst = 0, 0.0
        for _ in range(trials):
            n, m = int(gen.integers(2, 13)), int(gen.integers(1, 6))
            R, alpha = random_instance(gen, n, m)
            order = gen.permutation(n)
            i = int(order[0])
            t_size = int(gen.integers(0, n))
            T = [int(j) for j in order[1:t_size + 1]]
            S = [j for j in T if gen.random() < 0.5]
            gap = coverage.gain(i, T, R, alpha) - coverage.gain(i, S, R, alpha)
            grow = coverage.subset_utility(S, R, alpha) - coverage.subset_utility(T, R, alpha)
            worst = max(worst, gap, grow)
            if gap > 1e-12 or grow > 1e-12:
                violations += 1
        return trials, violations, worst
    return _timed("submodularity", body)


def marginal_suite(instances: int = 100, seed: int = DEFAULT_SEED) -> OracleResult:
    """Closed-form marginal against central differences of the uncovered mass.

    The uncovered mass is linear in each gate and has gradient -dU_c, so its
    differences carry no truncation error and stay on the gradient's scale
    when coverage saturates.
    """
    def body():
        gen = rng.stream(seed, rng.PROBE, "marginal")
        violations, worst = 0, 0.0
        for _ in range(instances):
            n, m = int(gen.integers(1, 51)), int(gen.integers(1, 9))
            R = gen.uniform(0.01, 0.99, (n, m))
            alpha = gen.uniform(0.0, 2.0, m)
            pi = gen.uniform(0.05, 0.95, n)
            fd = -numerical_gradient(lambda: uncovered_mass(pi, R, alpha), pi, MARGINAL_STEP)
            err = relative_error(coverage.marginal(pi, R, alpha), fd)
            worst = max(worst, err)
            violations += err > 1e-6
        return instances, violations, worst
    return _timed("marginal", body)


def greedy_suite(instances: int = 200, max_n: int = 12, max_k: int = 4,
                 seed: int = DEFAULT_SEED) -> OracleResult:
    """Greedy against the exhaustive optimum: (1 - 1/e) and the curvature factor."""
    def body():
        gen = rng.stream(seed, rng.PROBE, "greedy")
        violations, worst = 0, 0.0
        checked = 0
        while checked < instances:
            n, m = int(gen.integers(2, max_n + 1)), int(gen.integers(1, 6))
            k = int(gen.integers(1, min(max_k, n) + 1))
            R, alpha = random_instance(gen, n, m)
            try:
                kappa = coverage.curvature(R, alpha)
            except UndefinedCurvatureError:
                continue
            checked += 1
            opt = exhaustive_max(R, alpha, k)
            got = coverage.subset_utility(coverage.greedy_max(R, alpha, k), R, alpha)
            for factor in (1.0 - 1.0 / math.e, coverage.curvature_factor(kappa)):
                shortfall = factor * opt - got
                worst = max(worst, shortfall)
                if shortfall > 1e-12:
                    violations += 1
        return checked, violations, worst
    return _timed("greedy", body)


def composite_gradient_suite(draws: int = 20, seed: int = DEFAULT_SEED,
                             modes: Sequence[str] = INJECTION_MODES) -> OracleResult:
    """Composite-loss gradient of every parameter group against central differences."""
    def body():
        gen = rng.stream(seed, rng.PROBE, "composite")
        violations, worst, checked = 0, 0.0, 0
        for draw in range(draws):
            mode = modes[draw % len(modes)]
            bridge_input = "adapted" if draw % 2 else "raw"
            state = random_state(gen, d=6, num_classes=3, num_anchors=4, mode=mode, bridge_input=bridge_input)
            bag = random_bag(gen, 3, 6, 3)
            cfg = TrainConfig(mode=mode, budget=0.1, bridge_input=bridge_input)
            temperature = float(gen.uniform(0.4, 1.0))
            analytic = composite_loss(state, bag, cfg, temperature).grads
            for name, array in state.named_arrays().items():
                fd = numerical_gradient(lambda: composite_loss(state, bag, cfg, temperature).total, array)
                err = relative_error(analytic[name], fd)
                worst = max(worst, err)
                checked += 1
                if err > 1e-4:
                    logger.debug("gradient mismatch %s (%s): %.3g", name, mode, err)
                    violations += 1
        return checked, violations, worst
    return _timed("composite_gradient", body)


def identity_gate_suite(bags: int = 100, seed: int = DEFAULT_SEED) -> OracleResult:
    """All-ones gates reproduce the ungated host bit for bit in every mode."""
    def body():
        gen = rng.stream(seed, rng.PROBE, "identity")
        violations, checked = 0, 0
        for _ in range(bags):
            n, d = int(gen.integers(1, 40)), 8
            params = predictor.init_params(d, 3, int(gen.integers(1 << 31)))
            H = gen.normal(0.0, 1.0, (n, d))
            plain = predictor.forward(params, H)
            for mode in INJECTION_MODES:
                gated = predictor.forward(params, H, np.ones(n), mode)
                checked += 1
                if not (np.array_equal(plain.logits, gated.logits)
                        and np.array_equal(plain.attention, gated.attention)):
                    violations += 1
        return checked, violations, 0.0
    return _timed("identity_gate", body)


def recovery_suite(instances: int = 500, seed: int = DEFAULT_SEED,
                   cfg: Optional[RecoveryConfig] = None) -> OracleResult:
    """Coverage target or saturation flag, argmax-marginal picks, determinism."""
    cfg = cfg or RecoveryConfig()

    def body():
        gen = rng.stream(seed, rng.PROBE, "recovery")
        violations = 0
        for _ in range(instances):
            n, m = int(gen.integers(1, 30)), int(gen.integers(1, 6))
            R = gen.uniform(0.0, 0.95, (n, m))
            alpha = gen.uniform(0.0, 2.0, m)
            pi = gen.uniform(0.0, 1.0, n)
            first = recovery.recover(pi, R, alpha, cfg)
            again = recovery.recover(pi, R, alpha, cfg)
            ok = first.indices == again.indices
            ok = ok and (first.coverage >= cfg.coverage_target or first.saturated)
            ok = ok and all(b >= a for a, b in zip(first.history, first.history[1:]))
            start = len(first.indices) - len(first.gains)
            for step, gain in enumerate(first.gains):
                chosen = first.indices[:start + step]
                marg = coverage.marginal(coverage.indicator(chosen, n), R, alpha)
                marg[chosen] = -np.inf
                ok = ok and gain == marg.max() and first.indices[start + step] == int(np.argmax(marg))
            violations += not ok
        return instances, violations, 0.0
    return _timed("recovery", body)


def bound_audit_suite(seed: int = DEFAULT_SEED, bags: int = 10, patches: int = 8) -> OracleResult:
    def body():
        report = audits.interventional_bound_audit(bags, patches, seed=seed)
        return report.checked, report.violations, report.max_ratio
    return _timed("interventional_bound", body)


def recoverability_suite(draws: int = 20, seed: int = DEFAULT_SEED, probes: int = 100) -> OracleResult:
    """Gate-margin bound on random small models in feature-reweight mode."""
    def body():
        gen = rng.stream(seed, rng.PROBE, "recoverability")
        violations, worst = 0, 0.0
        for draw in range(draws):
            state = random_state(gen, d=6, num_classes=3, num_anchors=4, mode="feature_reweight")
            bag = random_bag(gen, int(gen.integers(2, 10)), 6, 3, f"oracle{draw}")
            audit = audits.recoverability_bound_audit(state, bag, probes=probes, seed=seed)
            worst = max(worst, audit.lhs - audit.rhs)
            violations += not audit.holds
        return draws, violations, worst
    return _timed("recoverability_bound", body)


def run_oracles(quick: bool = False, seed: int = DEFAULT_SEED) -> List[OracleResult]:
    """Every suite; ``quick`` shrinks instance counts while keeping N <= 10 enumeration."""
    if quick:
        return [
            submodularity_suite(1_000, seed),
            marginal_suite(20, seed),
            greedy_suite(50, max_n=10, seed=seed),
            composite_gradient_suite(3, seed),
            identity_gate_suite(20, seed),
            recovery_suite(100, seed),
            bound_audit_suite(seed, bags=3, patches=8),
            recoverability_suite(5, seed, probes=40),
        ]
    return [
        submodularity_suite(seed=seed),
        marginal_suite(seed=seed),
        greedy_suite(seed=seed),
        composite_gradient_suite(seed=seed),
        identity_gate_suite(seed=seed),
        recovery_suite(seed=seed),
        bound_audit_suite(seed),
        recoverability_suite(seed=seed),
    ]
