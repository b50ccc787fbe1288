"""Acceptance suite: one test per primary criterion, frozen configs.

Every test name spells out its criterion, so ``pytest -v`` emits exactly one
pass/fail line per criterion; each also prints a ``[PASS]/[FAIL]`` line with
its runtime (visible with ``-s`` / ``-rA``). Tolerances are stated inline and
frozen; expected values come from independent closed-form oracles computed in
this file, not from the implementation under test.
"""

import filecmp
import functools
import time

import numpy as np
import pytest

from saddle.algorithms import RunConfig, run
from saddle.cli import main as cli_main
from saddle.compression import (
    compress,
    contraction_delta,
    identity_op,
    sign_scaled,
    stochastic_quant,
    top_k,
)
from saddle.datagen import iid_partition, make_blobs, partition_dirichlet
from saddle.metrics import (
    ROUND_COLUMNS,
    cost_ratio,
    lambda_max,
    variance_diagnostics,
)
from saddle.models import (
    Batch,
    LogisticRegressionOracle,
    MLPOracle,
    QuadraticOracle,
)
from saddle.optim import parse_lr_schedule, sam_perturbation
from saddle.params import single_block
from saddle.rngs import TAG_INIT, TAG_METRICS, stream
from saddle.topology import (
    build_complete,
    build_ring,
    build_torus,
    spectral_gap,
)


def criterion(label):
    """Print one [PASS]/[FAIL] line per criterion, with wall time."""

    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            start = time.time()
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[FAIL] {label} ({time.time() - start:.1f}s)")
                raise
            print(f"[PASS] {label} ({time.time() - start:.1f}s)")

        return wrapper

    return deco


# ---------------------------------------------------------------------------
# 1. Reduction equivalences (bitwise, 3 seeds each, n=5 ring, tiny mlp, T=200)


def _tiny_mlp_problem():
    train = make_blobs(3, 20, 2, 0.5, 7, "train")
    test = make_blobs(3, 20, 2, 0.5, 7, "test")
    plan = iid_partition(train, 5, 7)
    shards = tuple(plan.shard_indices(i) for i in range(5))
    return train, test, shards, MLPOracle(2, 4, 3)


def _reduction_run(algorithm, seed, *, rho=0.0, beta=0.0, mu=0.0, gamma=1.0,
                   comp=None):
    train, test, shards, oracle = _tiny_mlp_problem()
    config = RunConfig(
        algorithm=algorithm,
        topology=build_ring(5),
        oracles=(oracle,) * 5,
        eta=0.05,
        rounds=200,
        seed=seed,
        rho=rho,
        beta=beta,
        mu=mu,
        gamma=gamma,
        batch_size=10,
        compression=comp,
        train=train,
        test=test,
        shards=shards,
    )
    return run(config, record_params=True)


_REDUCTION_PAIRS = (
    ("q_saddle(rho=0) == qgm",
     ("q_saddle", dict(rho=0.0, beta=0.9, mu=0.9)),
     ("qgm", dict(beta=0.9, mu=0.9)), False),
    ("qgm(beta=mu=0) == dpsgd",
     ("qgm", dict(beta=0.0, mu=0.0)),
     ("dpsgd", dict()), False),
    ("d_saddle(rho=0) == dpsgd",
     ("d_saddle", dict(rho=0.0)),
     ("dpsgd", dict()), False),
    ("n_saddle(rho=0) == ngm",
     ("n_saddle", dict(rho=0.0, beta=0.9, gamma=0.5)),
     ("ngm", dict(beta=0.9, gamma=0.5)), False),
    # identity-compressed twin: payload norms are measured on the compressed
    # side but logged as zero for uncompressed runs, so that one bookkeeping
    # column is exempt from the row comparison (trajectories stay bitwise)
    ("comp_n_saddle(identity) == n_saddle",
     ("comp_n_saddle", dict(rho=0.05, beta=0.9, gamma=0.5, comp=identity_op())),
     ("n_saddle", dict(rho=0.05, beta=0.9, gamma=0.5)), True),
)


@criterion("criterion 1: reduction equivalences, bitwise over 3 seeds")
def test_c01_reduction_equivalences_bitwise():
    for label, (algo_a, kw_a), (algo_b, kw_b), skip_payload_norm in _REDUCTION_PAIRS:
        start = time.time()
        for seed in (11, 22, 33):
            res_a = _reduction_run(algo_a, seed, **kw_a)
            res_b = _reduction_run(algo_b, seed, **kw_b)
            assert len(res_a.param_history) == 201, label
            for t, (pa, pb) in enumerate(
                zip(res_a.param_history, res_b.param_history)
            ):
                assert np.array_equal(pa, pb), f"{label}: seed {seed} round {t}"
            for row_a, row_b in zip(res_a.log.rows, res_b.log.rows):
                va, vb = list(row_a.values()), list(row_b.values())
                if skip_payload_norm:
                    assert row_a.compression_error_sum == 0.0, label
                    idx = ROUND_COLUMNS.index("update_norm_sum")
                    va[idx] = vb[idx] = 0.0
                assert va == vb, f"{label}: seed {seed} round {row_a.round}"
        assert time.time() - start < 60.0, f"{label}: over the 1-minute budget"


# ---------------------------------------------------------------------------
# 2. Gradient / HVP correctness against finite differences


def _fd_problems():
    rng = np.random.default_rng(42)
    b = rng.normal(size=(8, 8))
    quad = QuadraticOracle(b @ b.T / 8.0 + 0.5 * np.eye(8), rng.normal(size=8))
    logreg = LogisticRegressionOracle(3, 4)
    mlp = MLPOracle(3, 4, 3)
    feats = rng.normal(size=(20, 3))
    batch4 = Batch.from_arrays(feats, rng.integers(0, 4, size=20))
    batch3 = Batch.from_arrays(feats, rng.integers(0, 3, size=20))
    return ((quad, None), (logreg, batch4), (mlp, batch3))


@criterion("criterion 2: 50 FD gradient checks/oracle < 1e-4; hvp vs dense < 1e-2")
def test_c02_gradient_and_hvp_correctness():
    rng = np.random.default_rng(2024)
    h = 1e-6
    for oracle, batch in _fd_problems():
        for _ in range(50):
            params = rng.normal(size=oracle.dim)
            direction = rng.normal(size=oracle.dim)
            direction /= np.linalg.norm(direction)
            fd = (
                oracle.loss(params + h * direction, batch)
                - oracle.loss(params - h * direction, batch)
            ) / (2 * h)
            analytic = float(oracle.grad(params, batch) @ direction)
            rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-12)
            assert rel < 1e-4, f"{type(oracle).__name__}: grad rel err {rel}"

        # dense Hessian by finite differences of the gradient (d <= 60)
        assert oracle.dim <= 60
        params = rng.normal(size=oracle.dim)
        hs = 1e-5
        dense = np.empty((oracle.dim, oracle.dim))
        for j in range(oracle.dim):
            e = np.zeros(oracle.dim)
            e[j] = hs
            dense[:, j] = (
                oracle.grad(params + e, batch) - oracle.grad(params - e, batch)
            ) / (2 * hs)
        for _ in range(10):
            v = rng.normal(size=oracle.dim)
            hv = oracle.hvp(params, batch, v)
            ref = dense @ v
            rel = np.linalg.norm(hv - ref) / max(np.linalg.norm(ref), 1e-12)
            assert rel < 1e-2, f"{type(oracle).__name__}: hvp rel err {rel}"


# ---------------------------------------------------------------------------
# 3. SAM perturbation geometry over 1000 sampled steps


@criterion("criterion 3: ||xi|| = rho to 1e-12 across 1000 steps")
def test_c03_sam_perturbation_norm_is_rho():
    rng = np.random.default_rng(303)
    dims = (1, 3, 27, 100)
    rhos = (0.01, 0.05, 0.5, 1.0)
    for step in range(1000):
        dim = dims[step % len(dims)]
        rho = rhos[step % len(rhos)]
        scale = 10.0 ** rng.uniform(-8, 3)
        grad = scale * rng.normal(size=dim)
        if np.linalg.norm(grad) == 0.0:
            continue
        xi = sam_perturbation(grad, rho)
        assert abs(float(np.linalg.norm(xi)) - rho) < 1e-12


# ---------------------------------------------------------------------------
# 4. Compression contract: delta bound, exact top-k, quant unbiasedness


def _expected_quant_err_sq(v: np.ndarray, bits: int) -> float:
    """Closed-form E||Q(v)-v||^2 for max-scaled stochastic rounding."""
    levels = (1 << bits) - 1
    scale = np.abs(v).max()
    if scale == 0.0:
        return 0.0
    step = 2 * scale / (levels - 1)
    t = (v + scale) / (2 * scale) * (levels - 1)
    frac = t - np.floor(t)
    return float(np.sum(frac * (1 - frac)) * step**2)


@criterion("criterion 4: Eq-4 delta bounds (<=5% slack; top-k exact; quant unbiased)")
def test_c04_compression_contract():
    d = 80
    for op in (stochastic_quant(4), stochastic_quant(8), sign_scaled()):
        est_rng = np.random.default_rng(77)
        delta_hat = contraction_delta(op, 1000, d, est_rng)
        bound = (1.0 - delta_hat) * 1.05  # <= 5% slack on the declared bound
        test_rng = np.random.default_rng(88)
        for _ in range(1000):
            v = test_rng.normal(size=d)
            sq = float(v @ v)
            if op.kind == "stochastic_quant":
                err = _expected_quant_err_sq(v, op.bits)
            else:
                err = float(
                    np.sum((compress(op, v, rng=test_rng).decode() - v) ** 2)
                )
            assert err <= bound * sq + 1e-12, f"{op.label()}: contract violated"

    # top-k: the declared bound holds for every vector with zero slack
    op = top_k(0.3)
    rng = np.random.default_rng(5)
    for _ in range(1000):
        v = rng.normal(size=40)
        err = float(np.sum((compress(op, v).decode() - v) ** 2))
        assert err <= (1.0 - op.delta) * float(v @ v) + 1e-12

    # stochastic quantization unbiasedness: 3 standard errors over 1e5 draws
    rng = np.random.default_rng(123)
    v = rng.normal(size=50)
    bits, n_draws = 8, 100_000
    levels = (1 << bits) - 1
    scale = np.abs(v).max()
    step = 2 * scale / (levels - 1)
    t = (v + scale) / (2 * scale) * (levels - 1)
    frac = t - np.floor(t)
    draw_rng = np.random.default_rng(456)
    total = np.zeros(50)
    for _ in range(n_draws):
        total += compress(stochastic_quant(bits), v, rng=draw_rng).decode()
    mean = total / n_draws
    se = np.sqrt(frac * (1 - frac)) * step / np.sqrt(n_draws)
    assert np.all(np.abs(mean - v) <= 3 * se + 1e-12)


# ---------------------------------------------------------------------------
# 5. Communication cost accounting (pure arithmetic)


@criterion("criterion 5: cost ratios 4.000+-1%, 1.94+-0.01, 2.22+-0.01")
def test_c05_cost_accounting_ratios():
    blocks = single_block(10_000)
    quant8 = cost_ratio(stochastic_quant(8), blocks)
    assert abs(quant8 - 4.000) <= 0.04, f"quant-8 ratio {quant8}"
    sign_total = cost_ratio(sign_scaled(), blocks, two_round=True)
    assert abs(sign_total - 1.94) <= 0.01, f"sign two-round ratio {sign_total}"
    topk30 = cost_ratio(top_k(0.3), blocks)
    assert abs(topk30 - 2.22) <= 0.01, f"top-30% ratio {topk30}"


# ---------------------------------------------------------------------------
# 6. Topology: exact ring-4 gap and the mixing contraction inequality


@criterion("criterion 6: ring-4 gap = 8/9 within 1e-10; contraction on 100 draws")
def test_c06_spectral_gap_and_contraction():
    w4 = build_ring(4).weights
    eigs = np.sort(np.abs(np.linalg.eigvalsh(w4)))[::-1]
    gap_oracle = 1.0 - eigs[1] ** 2  # independent eigendecomposition oracle
    assert abs(gap_oracle - 8.0 / 9.0) < 1e-10
    assert abs(spectral_gap(w4) - 8.0 / 9.0) < 1e-10

    rng = np.random.default_rng(606)
    for mm in (build_ring(4), build_ring(5), build_torus(3, 3),
               build_torus(3, 4), build_complete(5)):
        w, gap = mm.weights, spectral_gap(mm.weights)
        for _ in range(100):
            z = rng.normal(size=(mm.n_agents, 3))
            zbar = z.mean(axis=0, keepdims=True)
            lhs = float(np.sum((w @ z - zbar) ** 2))
            rhs = (1.0 - gap) * float(np.sum((z - zbar) ** 2))
            assert lhs <= rhs * (1 + 1e-12) + 1e-30


# ---------------------------------------------------------------------------
# 7. Convergence sanity on heterogeneous scalar quadratics


@criterion("criterion 7: qgm & q_saddle reach the global optimum (T=2000, <10s)")
def test_c07_convergence_to_global_optimum():
    start = time.time()
    centers = (-1.0, -0.5, 0.0, 0.5, 1.0)  # mean = 0 is the global optimum
    oracles = tuple(QuadraticOracle(np.eye(1), np.array([c])) for c in centers)
    schedule = parse_lr_schedule("step:0.5,0.75:0.1")
    for algorithm, rho in (("qgm", 0.0), ("q_saddle", 0.001)):
        config = RunConfig(
            algorithm=algorithm,
            topology=build_ring(5),
            oracles=oracles,
            eta=0.02,
            rounds=2000,
            seed=3,
            rho=rho,
            beta=0.9,
            mu=0.9,
            lr_schedule=schedule,
        )
        result = run(config)
        distance = abs(float(result.consensus[0]) - 0.0)
        assert distance < 1e-3, f"{algorithm}: |consensus - optimum| = {distance}"
        final_consensus_err = result.log.final_row.consensus_error
        assert final_consensus_err < 1e-6, (
            f"{algorithm}: consensus_error = {final_consensus_err}"
        )
    assert time.time() - start < 10.0


# ---------------------------------------------------------------------------
# 8. Directional desk-scale replication (5-seed medians, ordinal checks)


@criterion("criterion 8: q_saddle acc >= qgm; quant-8 drop <=; lambda_max <")
def test_c08_directional_replication_blobs():
    start = time.time()
    train = make_blobs(10, 20, 10, 0.5, 0, "train")
    test = make_blobs(10, 100, 10, 0.5, 0, "test")
    plan = partition_dirichlet(train, 10, 0.001, 0)
    shards = tuple(plan.shard_indices(i) for i in range(10))
    # alpha = 0.001 concentrates each class on one agent: one class per agent
    for shard in shards:
        assert len(set(train.labels[shard].tolist())) == 1
    oracle = MLPOracle(10, 8, 10)
    topology = build_ring(10)
    seeds = (1, 2, 3, 4, 5)

    def median_stats(algorithm, rho, comp):
        accs, lams = [], []
        for seed in seeds:
            config = RunConfig(
                algorithm=algorithm,
                topology=topology,
                oracles=(oracle,) * 10,
                eta=0.05,
                rounds=400,
                seed=seed,
                rho=rho,
                beta=0.9,
                mu=0.9,
                gamma=0.5 if comp is not None else 1.0,
                batch_size=8,
                compression=comp,
                train=train,
                test=test,
                shards=shards,
            )
            result = run(config)
            assert not result.log.diverged
            accs.append(result.log.final_test_acc)
            if comp is None:
                lams.append(
                    lambda_max(
                        oracle,
                        result.consensus,
                        Batch.from_arrays(train.features, train.labels),
                        iters=200,
                        rng=stream(TAG_METRICS, seed, 99),
                    )
                )
        return float(np.median(accs)), (float(np.median(lams)) if lams else None)

    acc_qgm, lam_qgm = median_stats("qgm", 0.0, None)
    acc_qs, lam_qs = median_stats("q_saddle", 0.1, None)
    acc_qgm_c, _ = median_stats("comp_qgm", 0.0, stochastic_quant(8))
    acc_qs_c, _ = median_stats("comp_q_saddle", 0.1, stochastic_quant(8))

    # (a) final test accuracy: sharpness-aware >= plain momentum
    assert acc_qs >= acc_qgm, f"(a) acc {acc_qs} < {acc_qgm}"
    # (b) accuracy drop under 8-bit quantization: sharpness-aware drops less
    drop_qgm = acc_qgm - acc_qgm_c
    drop_qs = acc_qs - acc_qs_c
    assert drop_qs <= drop_qgm, f"(b) drop {drop_qs} > {drop_qgm}"
    # (c) end-of-training curvature: sharpness-aware finds flatter minima
    assert lam_qs < lam_qgm, f"(c) lambda_max {lam_qs} >= {lam_qgm}"
    assert time.time() - start < 600.0


# ---------------------------------------------------------------------------
# 9. Heterogeneity diagnostics direction (10-seed medians)


@criterion("criterion 9: delta2(alpha=0.001) > delta2(alpha=100); sigma2 = 0")
def test_c09_heterogeneity_diagnostics_direction():
    ds = make_blobs(10, 20, 10, 0.5, 0, "train")
    oracle = MLPOracle(10, 8, 10)
    params = oracle.init_params(stream(TAG_INIT, 0))  # one shared model point
    delta2 = {0.001: [], 100.0: []}
    for seed in range(10):
        for alpha in delta2:
            plan = partition_dirichlet(ds, 10, alpha, seed)
            batches = [
                Batch.from_arrays(ds.features[idx], ds.labels[idx])
                for idx in (plan.shard_indices(i) for i in range(10))
            ]
            diag = variance_diagnostics((oracle,) * 10, params, batches)
            assert diag.sigma2_hat == 0.0  # full-batch: zero sampling variance
            delta2[alpha].append(diag.delta2_hat)
    low, high = np.median(delta2[100.0]), np.median(delta2[0.001])
    assert high > low, f"delta2 medians: alpha=0.001 {high} <= alpha=100 {low}"


# ---------------------------------------------------------------------------
# 10. Determinism: identical config -> byte-identical CSVs


_DETERMINISM_CONFIG = """\
algorithm = comp_q_saddle
agents = 5
topology = ring
rounds = 40
eta = 0.05
rho = 0.05
beta = 0.9
gamma = 0.5
compression = quant
bits = 4, 8
seeds = 1, 2
dataset = blobs
classes = 3
per_class = 15
model = mlp
hidden = 4
batch_size = 6
lambda_max_rounds = 0, 40
variance_diagnostics = true
loss_surface = true
surface_grid = 5
surface_extent = 0.5
"""


@criterion("criterion 10: repeated acceptance run yields byte-identical CSVs")
def test_c10_determinism_byte_identical_csvs(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        cfg = tmp_path / f"{out.name}.cfg"
        cfg.write_text(_DETERMINISM_CONFIG + f"out_dir = {out}\n")
        assert cli_main(["run", "--config", str(cfg)]) == 0
    names = sorted(p.name for p in out_a.iterdir())
    assert names == sorted(p.name for p in out_b.iterdir())
    assert any(name.endswith("_diag.csv") for name in names)
    assert any(name.endswith("_surface.csv") for name in names)
    match, mismatch, errors = filecmp.cmpfiles(out_a, out_b, names, shallow=False)
    assert mismatch == [] and errors == [], f"differing files: {mismatch or errors}"
    assert sorted(match) == names
