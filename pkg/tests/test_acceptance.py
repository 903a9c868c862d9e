"""End-to-end acceptance checks, one per headline guarantee.

Every test stands alone: it builds what it needs, checks the guarantee
at its stated tolerance, and asserts its own wall-time budget. The
bundled scenario is the default corpus, network, and pipeline; its
initial and final losses are pinned regression constants from the first
verified run. The only shared state is a lazy cache of that one default
run so the suite does not repeat the identical computation.

Run order follows cost: closed-form identities first, full pipeline
runs after, the subprocess determinism check last.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from harmoq.corpus import CorpusConfig, generate_corpus
from harmoq.evaluation import baseline_states, evaluate_corpus
from harmoq.pipeline import PipelineConfig, ablation_run, run_harmoq
from harmoq.projections import make_projection
from harmoq.quantizer import MIN_GAP, QuantizerConfig, quant_error, step_size, theoretical_mse
from harmoq.refiner import boundary_gradients
from harmoq.scaling import (BoundarySet, applied_configs, component_mse,
                            optimal_scale, scale_validity_interval)
from harmoq.src_calib import SrcConfig, compute_src_correction, src_objective
from harmoq.stats import CalibStats, finalize, update_stats
from harmoq.toynet import ToyNetConfig, build_toynet

from conftest import correlated_moments

# Losses of the default 2-bit run, pinned on the first verified run.
PINNED_INITIAL_LOSS = 14.716514708218574
PINNED_FINAL_LOSS = 8.624148500485225
# The CLI flow round-trips the corpus through 8-bit image files, so its
# calibration data and losses differ slightly from the in-memory run.
PINNED_CLI_INITIAL_LOSS = 14.696740046795142
PINNED_CLI_FINAL_LOSS = 8.767207490916054
PIN_REL = 1e-7

_CACHE: dict = {}


def bundled_scenario():
    if "scenario" not in _CACHE:
        calib_pairs, eval_pairs = generate_corpus(CorpusConfig(), seed=3)
        _CACHE["scenario"] = (
            build_toynet(ToyNetConfig()),
            [lr for lr, _ in calib_pairs],
            [lr for lr, _ in eval_pairs],
        )
    return _CACHE["scenario"]


def default_run():
    """The bundled 2-bit run with all components on, computed once."""
    if "default_run" not in _CACHE:
        net, calib, _ = bundled_scenario()
        _CACHE["default_run"] = run_harmoq(net, calib, PipelineConfig())
    return _CACHE["default_run"]


def test_criterion_01_quantizer_mse_law():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    alpha, beta = -0.7, 1.3
    x = rng.uniform(alpha, beta, 10 ** 6)
    for bits in (4, 8):
        cfg = QuantizerConfig(bits, alpha, beta)
        empirical = float(np.mean(quant_error(x, cfg) ** 2))
        law = theoretical_mse(cfg)
        assert abs(empirical - law) <= 0.03 * law
    assert time.perf_counter() - t0 < 10.0


def test_criterion_02_scale_balance_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(12)
    accepted = 0
    attempts = 0
    while accepted < 1000:
        attempts += 1
        assert attempts < 200000, "rejection sampler starved"
        bits_a = int(rng.integers(2, 9))
        bits_w = int(rng.integers(2, 9))
        ax = float(rng.uniform(-5.0, 5.0))
        aw = float(rng.uniform(-5.0, 5.0))
        theta = BoundarySet(ax, ax + float(rng.uniform(0.011, 10.0)),
                            aw, aw + float(rng.uniform(0.011, 10.0)))
        s = optimal_scale(theta, bits_a, bits_w)
        lo, hi = scale_validity_interval(theta)
        if not lo < s < hi:
            continue  # clamped configs sit exactly on an endpoint
        accepted += 1
        mse_x = component_mse("act", s, theta, bits_a)
        mse_w = component_mse("wt", s, theta, bits_w)
        assert abs(mse_x - mse_w) <= 1e-12 * max(mse_x, mse_w)
    assert time.perf_counter() - t0 < 1.0


def gd_oracle(w, moments, h, lam, steps=10000):
    """Plain gradient descent on the correction objective.

    Independent of the closed form: the projector comes from numpy's
    pinv and the step size is 1/L for an upper Lipschitz bound L.
    """
    s_xx, s_dx, _ = moments
    hm = h.h
    hp = np.linalg.pinv(hm)
    p = hp @ hm
    lip = 2.0 * (np.linalg.norm(p @ s_xx @ p, 2)
                 + lam * np.linalg.norm(hp @ hp.T, 2) + lam)
    delta = np.zeros_like(w)
    ws = w @ s_dx
    for _ in range(steps):
        grad = 2.0 * (ws @ p + (delta @ p) @ s_xx @ p
                      + lam * (delta @ hp) @ hp.T + lam * (delta - delta @ p))
        delta = delta - grad / lip
    return delta


def objective_gradient_norm(delta, w, moments, h, lam, step=1e-6) -> float:
    total = 0.0
    for r in range(delta.shape[0]):
        for c in range(delta.shape[1]):
            up = delta.copy()
            up[r, c] += step
            dn = delta.copy()
            dn[r, c] -= step
            g = (src_objective(up, w, moments, h, lam)
                 - src_objective(dn, w, moments, h, lam)) / (2 * step)
            total += g * g
    return float(np.sqrt(total))


def test_criterion_03_structural_correction_oracle():
    t0 = time.perf_counter()
    lam = 1e-2
    # solver_eps folds into the effective ridge; zero keeps the solve at
    # exactly the lam the objective is evaluated with
    cfg = SrcConfig(lam=lam, solver_eps=0.0)
    rng = np.random.default_rng(33)
    for _ in range(50):
        m = int(rng.integers(1, 5))
        d = int(rng.integers(3, 9))
        k = int(rng.integers(1, min(d - 1, 4) + 1))
        s_xx, s_dx, s_dd, _, _, _ = correlated_moments(rng, d)
        moments = (s_xx, s_dx, s_dd)
        w = rng.standard_normal((m, d))
        h = make_projection("random", d, k, seed=int(rng.integers(1 << 31)))
        star = compute_src_correction(w, moments, h, cfg)
        f_star = src_objective(star, w, moments, h, lam)
        f_gd = src_objective(gd_oracle(w, moments, h, lam), w, moments, h, lam)
        assert f_star <= f_gd + 1e-6
        grad_norm = objective_gradient_norm(star, w, moments, h, lam)
        assert grad_norm < 1e-6 * (1.0 + float(np.linalg.norm(w)))
    assert time.perf_counter() - t0 < 60.0


def frozen_indices(z, cfg: QuantizerConfig) -> np.ndarray:
    delta = step_size(cfg)
    return np.rint(np.clip((z - cfg.alpha) / delta, 0.0, float(cfg.levels)))


def surrogate_loss(w, x, s, applied, idx_x, idx_w, lev_a, lev_w):
    """Layer loss with grid indices frozen; linear per element in the bounds."""
    ax, bx, aw, bw = applied
    w_s = w * s
    x_s = x / s
    q_x = ax + idx_x * ((bx - ax) / lev_a)
    q_w = aw + idx_w * ((bw - aw) / lev_w)
    residual = (q_x - x_s) @ w_s.T + x_s @ (q_w - w_s).T
    return float(np.mean(np.sum(residual * residual, axis=1)))


def fd_gradients(w, x, s, theta, bits_a, bits_w, h=1e-6):
    act, wt = applied_configs(theta, s, bits_a, bits_w)
    idx_x = frozen_indices(x / s, act)
    idx_w = frozen_indices(w * s, wt)
    center = np.array([act.alpha, act.beta, wt.alpha, wt.beta])
    out = np.zeros(4)
    for j in range(4):
        up = center.copy()
        up[j] += h
        dn = center.copy()
        dn[j] -= h
        out[j] = (surrogate_loss(w, x, s, up, idx_x, idx_w, act.levels, wt.levels)
                  - surrogate_loss(w, x, s, dn, idx_x, idx_w, act.levels, wt.levels)) / (2 * h)
    return out


def test_criterion_04_boundary_gradient_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(44)
    for _ in range(100):
        m, d = int(rng.integers(2, 6)), int(rng.integers(2, 9))
        w = rng.standard_normal((m, d))
        x = rng.standard_normal((8, d))
        theta = BoundarySet(float(x.min() * 0.8), float(x.max() * 0.8),
                            float(w.min() * 0.8), float(w.max() * 0.8))
        bits_a = int(rng.integers(2, 4))
        bits_w = int(rng.integers(2, 4))
        s = float(rng.uniform(0.5, 2.0))
        got = boundary_gradients(w, x, s, theta, bits_a, bits_w)
        want = fd_gradients(w, x, s, theta, bits_a, bits_w)
        rel = float(np.linalg.norm(got - want)) / max(float(np.linalg.norm(want)), 1e-12)
        assert rel <= 1e-5
    assert time.perf_counter() - t0 < 30.0


def test_criterion_05_pipeline_monotonic_convergence():
    t0 = time.perf_counter()
    res = default_run()
    accepted = [res.initial_loss] + [r.loss for r in res.trace if not r.rollback]
    assert all(later <= earlier for earlier, later in zip(accepted, accepted[1:]))
    assert res.stop_reason == "converged"
    assert len(res.trace) <= 40
    assert res.final_loss < res.initial_loss
    assert res.final_loss == accepted[-1]
    assert res.initial_loss == pytest.approx(PINNED_INITIAL_LOSS, rel=PIN_REL)
    assert res.final_loss == pytest.approx(PINNED_FINAL_LOSS, rel=PIN_REL)
    assert time.perf_counter() - t0 < 300.0


def test_criterion_06_end_to_end_psnr_ordering():
    t0 = time.perf_counter()
    net, calib, evl = bundled_scenario()
    for bits in (2, 3):
        res = run_harmoq(net, calib, PipelineConfig(bits_a=bits, bits_w=bits))
        ours = evaluate_corpus(res.net, res.states, evl, ref_net=net)["psnr_mean"]
        minmax = evaluate_corpus(
            net, baseline_states(net, calib, bits, bits, "minmax"), evl)["psnr_mean"]
        pct = evaluate_corpus(
            net, baseline_states(net, calib, bits, bits, "percentile", p=99.0),
            evl)["psnr_mean"]
        assert ours >= minmax
        assert ours >= pct
    assert time.perf_counter() - t0 < 600.0


def test_criterion_07_ablation_full_is_best():
    t0 = time.perf_counter()
    net, calib, _ = bundled_scenario()
    rows = ablation_run(net, calib, PipelineConfig())
    by_subset = {row["subset"]: row["final_loss"] for row in rows}
    full = by_subset.pop("SRC+HSO+ABR")
    assert len(by_subset) == 7
    # non-strict: a two-component subset may tie the full pipeline to
    # within rounding on this scenario
    assert full <= min(by_subset.values()) + 1e-9
    assert time.perf_counter() - t0 < 1800.0


def test_criterion_08_projection_sanity():
    t0 = time.perf_counter()
    for proj in (make_projection("laplacian", 16),
                 make_projection("laplacian", 256, spatial=(16, 16)),
                 make_projection("sobel", 256, spatial=(16, 16))):
        annihilated = proj.h @ np.ones(proj.d)
        assert np.all(annihilated == 0.0)

    net, calib, _ = bundled_scenario()
    randomized = run_harmoq(net, calib, PipelineConfig(projection_kind="random"))
    assert randomized.final_loss >= default_run().final_loss
    assert time.perf_counter() - t0 < 600.0


def timed_src_iteration(d: int, k: int, m: int, n=256, chunk=64, trials=7) -> float:
    """Best-of-trials wall time of one statistics refresh plus solve."""
    rng = np.random.default_rng(d)
    x = rng.standard_normal((n, d))
    dx = 0.05 * rng.standard_normal((n, d))
    w = rng.standard_normal((m, d))
    h = make_projection("random", d, k, seed=5)
    cfg = SrcConfig()
    best = float("inf")
    for _ in range(trials):
        start = time.perf_counter()
        stats = CalibStats(d, warmup=n)
        for lo in range(0, n, chunk):
            stats = update_stats(stats, x[lo:lo + chunk], dx[lo:lo + chunk])
        compute_src_correction(w, finalize(stats), h, cfg)
        best = min(best, time.perf_counter() - start)
    return best


def test_criterion_09_src_iteration_scaling():
    t0 = time.perf_counter()
    dims = np.array([64, 128, 256, 512])
    with threadpool_limits(limits=1):
        times = np.array([timed_src_iteration(d, 32, 16) for d in dims])
    exponent = float(np.polyfit(np.log(dims), np.log(times), 1)[0])
    assert 1.7 <= exponent <= 2.6
    assert time.perf_counter() - t0 < 300.0


def run_cli(*args: str) -> None:
    argv = [sys.executable, "-c", "from harmoq.cli import main; main()",
            "--threads", "1", *args]
    proc = subprocess.run(argv, capture_output=True, text=True)
    assert proc.returncode == 0, f"{args}: {proc.stdout}{proc.stderr}"


def test_criterion_10_manifest_replay_determinism(tmp_path):
    corpus = tmp_path / "corpus"
    first = tmp_path / "run"
    replay = tmp_path / "replay"
    run_cli("gen-corpus", "--out", str(corpus))
    run_cli("quantize", "--corpus", str(corpus), "--out", str(first))
    run_cli("quantize", "--from-manifest", str(first / "run-manifest.json"),
            "--out", str(replay))
    for out in (first, replay):
        run_cli("report", "--in", str(out))
    for name in ("trace.jsonl", "states.json", "summary.json", "report.md",
                 "layer0.hqt", "layer1.hqt", "layer2.hqt"):
        assert (replay / name).read_bytes() == (first / name).read_bytes()
    summary = json.loads((first / "summary.json").read_text())
    assert summary["initial_loss"] == pytest.approx(PINNED_CLI_INITIAL_LOSS, rel=PIN_REL)
    assert summary["final_loss"] == pytest.approx(PINNED_CLI_FINAL_LOSS, rel=PIN_REL)
