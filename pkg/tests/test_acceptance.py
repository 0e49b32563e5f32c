"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; criterion 8 trains two
networks for a few minutes and is marked ``slow`` (deselect with
``-m "not slow"``).
"""
import math
import time

import numpy as np
import pytest
from scipy.stats import norm

from chaosrom.cli import main
from chaosrom.dmd import fit_dmd, fit_dmd_trajectories
from chaosrom.dynamics import DatasetConfig, generate_dataset, generate_forecast_ensemble, l96_rhs
from chaosrom.evaluate import kde_fit, kl_approx
from chaosrom.neural import (L96_LLE, encode, init_neural_rom, latent_path,
                             loss_and_grad, rom_forecast, sphere_image_bound)
from chaosrom.ode import integrate_fixed, trap_step
from chaosrom.persistence import load_model
from chaosrom.quadratic import fit_quadratic_decoder, fit_quadratic_dynamics, quad_form


@pytest.fixture
def verdict(capsys):
    """Print one line per criterion to the terminal, then assert."""
    start = time.perf_counter()

    def report(number, ok, detail, budget):
        elapsed = time.perf_counter() - start
        ok = bool(ok) and elapsed <= budget
        with capsys.disabled():
            print(f"\n[acceptance {number}] {'PASS' if ok else 'FAIL'}: {detail} "
                  f"({elapsed:.1f}s, budget {budget:g}s)")
        assert ok, detail

    return report


def test_criterion_1_lorenz96(verdict):
    fixed = np.max(np.abs(l96_rhs(np.full(40, 8.0), 8.0)))
    X = np.random.default_rng(1).normal(0, 5, (100, 40))
    Q = l96_rhs(X, 0.0) + X  # the quadratic advection term alone
    energy = np.abs(np.sum(X * Q, axis=1))
    worst = float(np.max(energy / (np.linalg.norm(X, axis=1) * np.linalg.norm(Q, axis=1))))
    hand = l96_rhs(np.array([1.0, 2, 3, 4]), 8.0)
    ok = fixed <= 1e-14 and worst <= 1e-12 and np.array_equal(hand, [3, 5, 11, 1])
    verdict(1, ok, f"fixed point {fixed:.1e}, energy {worst:.1e} rel, hand case {hand.tolist()}", 1)


def test_criterion_2_integrator_order(verdict):
    hs = np.array([0.1, 0.05, 0.025])
    trap, euler = [], []
    for h in hs:
        n = int(round(1 / h))
        trap.append(abs(integrate_fixed(lambda u: -u, np.array([1.0]), n, h)[0] - math.exp(-1)))
        u = np.array([1.0])
        for _ in range(n):
            u = trap_step(lambda v: -v, u, h).u_embedded
        euler.append(abs(u[0] - math.exp(-1)))
    p_trap = np.polyfit(np.log(hs), np.log(trap), 1)[0]
    p_euler = np.polyfit(np.log(hs), np.log(euler), 1)[0]
    ok = 1.8 <= p_trap <= 2.2 and 0.8 <= p_euler <= 1.2
    verdict(2, ok, f"trapezoid order {p_trap:.3f}, embedded order {p_euler:.3f}", 1)


def test_criterion_3_weak_preservation(verdict):
    model = init_neural_rom(40, 28, 50, True, seed=0)
    bound = sphere_image_bound(model, 100_000)
    x0 = generate_forecast_ensemble(1, DatasetConfig(n_points=10, burn_in=10.0))[0]
    times = 0.05 * np.arange(241)
    U = latent_path(model, encode(model, x0), times)
    drift = float(np.max(np.abs(np.linalg.norm(U, axis=1) - 1)))
    peak = float(np.max(np.abs(rom_forecast(model, x0, 12.0, 0.05).states)))
    ok = len(U) == 241 and drift <= 1e-9 and peak <= bound
    verdict(3, ok, f"{len(U)} latent states, max | |u|-1 | {drift:.1e}, "
                   f"decoded peak {peak:.4f} <= bound {bound:.4f}", 30)


def test_criterion_4_gradient_oracle(verdict):
    rng = np.random.default_rng(4)
    worst = 0.0
    for constrained in (True, False):
        m = init_neural_rom(4, 2, 3, constrained, seed=1, lam=L96_LLE, omega=100.0,
                            upsilon=1.0, substeps=5)
        m = m.with_flat(m.flat() + 0.2 * rng.standard_normal(m.flat().size))
        X = rng.standard_normal((1, 2, 4))
        dts = np.array([0.05])
        _, _, g = loss_and_grad(m, X, dts)
        theta, eps = m.flat(), 1e-6
        fd = np.empty_like(theta)
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = eps
            fd[i] = (loss_and_grad(m.with_flat(theta + e), X, dts, False)[0]
                     - loss_and_grad(m.with_flat(theta - e), X, dts, False)[0]) / (2 * eps)
        worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3))))
    verdict(4, worst <= 1e-4, f"{theta.size} parameters x 2 variants, worst relative "
                              f"error {worst:.2e}", 10)


def test_criterion_5_dmd(verdict):
    rng = np.random.default_rng(5)
    S = rng.standard_normal((6, 6))
    lam = np.array([0.9, 0.5, -0.3, 0.7, 0.2, -0.8])
    A = S @ np.diag(lam) @ np.linalg.inv(S)
    X = rng.standard_normal((12, 6))
    model = fit_dmd([(x, A @ x) for x in X], 6, 1.0)
    eig_err = float(np.max(np.abs(np.sort(model.eigenvalues.real) - np.sort(lam))))
    eig_err = max(eig_err, float(np.max(np.abs(model.eigenvalues.imag))))
    trajs = generate_dataset(DatasetConfig(n_points=1000, rollout=1))
    growth = float(fit_dmd_trajectories(trajs, 28).Omega.real.max())
    ok = eig_err <= 1e-8 and growth < 0
    verdict(5, ok, f"6x6 eigenvalue error {eig_err:.1e}, L96 max Re(omega) {growth:.4g}", 30)


def test_criterion_6_quadratic_manifold(verdict):
    rng = np.random.default_rng(6)
    n, r = 10, 3
    Phi, _ = np.linalg.qr(rng.standard_normal((n, r)))
    T = rng.standard_normal((n, r, r))
    T = 0.5 * (T + T.transpose(0, 2, 1))
    T -= np.einsum("ia,ajk->ijk", Phi @ Phi.T, T)
    U = rng.uniform(-1, 1, (500, r))
    X = U @ Phi.T + quad_form(T, U)
    t_err = float(np.max(np.abs(fit_quadratic_decoder(X, np.zeros(n), Phi) - T)))

    B = 0.5 * rng.standard_normal((r, r))
    w, V = np.linalg.eig(B)
    h = 1e-3
    Us, dUs = [], []
    for u0 in rng.standard_normal((30, r)):
        c = np.linalg.solve(V, u0)
        path = np.real(np.einsum("ij,tj->ti", V, c * np.exp(np.outer(h * np.arange(5), w))))
        Us.append(path[2])
        dUs.append((path[0] - 8 * path[1] + 8 * path[3] - path[4]) / (12 * h))
    a, Bf, C = fit_quadratic_dynamics(np.array(Us), np.array(dUs))
    b_err = float(np.max(np.abs(Bf - B)))
    ok = t_err <= 1e-6 and b_err <= 1e-6 and np.linalg.norm(a) <= 1e-6 and np.linalg.norm(C) <= 1e-6
    verdict(6, ok, f"T error {t_err:.1e}, B error {b_err:.1e}, |a| {np.linalg.norm(a):.1e}, "
                   f"|C| {np.linalg.norm(C):.1e}", 30)


def test_criterion_7_kl_calibration(verdict):
    X = np.random.default_rng(7).standard_normal(100_000)
    kl = kl_approx(norm(0, 1).logpdf, norm(0.1, 1).logpdf, X)
    S = np.random.default_rng(8).standard_normal((200, 3))
    p = kde_fit(S)
    same = kl_approx(p, p, S)
    ok = 0.0025 <= kl <= 0.0100 and same == 0.0
    verdict(7, ok, f"Gaussian shift estimate {kl:.5f} (analytic 0.005), identical model {same}", 10)


@pytest.mark.slow
def test_criterion_8_end_to_end(verdict, tmp_path):
    data = tmp_path / "train.csv"
    main(["gen-data", "--n-points", "1000", "--rollout", "1", "--out", str(data)])
    common = ["--data", str(data), "--r", "28", "--hidden", "500", "--epochs", "200",
              "--lambda", "1.6852", "--omega", "100", "--upsilon", "1", "--seed", "0"]
    for method in ("syco", "ae"):
        code = main(["train", "--method", method, *common, "--out", str(tmp_path / method),
                     "--loss-log", str(tmp_path / f"{method}.loss.csv")])
        assert code == 0
    x0 = generate_forecast_ensemble(1, DatasetConfig(n_points=1000, rollout=1))[0]
    init = ",".join(repr(float(v)) for v in x0)
    outcome = {}
    for method in ("syco", "ae"):
        out = tmp_path / f"{method}.flow.csv"
        main(["forecast", "--model", str(tmp_path / method), "--init", init, "--days", "60",
              "--out", str(out)])
        lines = out.read_text().splitlines()
        rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]
                         if not ln.startswith("#")])
        outcome[method] = (len(rows), lines[-1] if lines[-1].startswith("#") else "complete",
                           float(np.abs(rows[:, 1:]).max()) if len(rows) else math.nan)
    syco = load_model(tmp_path / "syco", "syco")
    bound = sphere_image_bound(syco, 100_000)
    log = np.loadtxt(tmp_path / "syco.loss.csv", delimiter=",", skiprows=1)
    first, last = log[0, 2], log[-1, 2]
    n_rows, status, peak = outcome["syco"]
    ae_rows, ae_status, ae_peak = outcome["ae"]
    ok = n_rows == 241 and status == "complete" and peak <= bound and last < first
    verdict(8, ok, f"SyCo-AE loss {first:.4g} -> {last:.4g}, 60-day forecast {n_rows} rows, "
                   f"peak {peak:.3f} <= bound {bound:.3f}; plain AE (not asserted): "
                   f"{ae_rows} rows, {ae_status}, peak {ae_peak:.3g}", 1800)


def test_criterion_9_data_protocol(verdict, tmp_path):
    checks = []
    for k, n_traj in ((1, 50), (9, 10)):
        path = tmp_path / f"k{k}.csv"
        main(["gen-data", "--n-points", "100", "--rollout", str(k), "--out", str(path)])
        raw = path.read_bytes()
        header = b"time," + b",".join(b"x%d" % j for j in range(1, 41)) + b"\n"
        blocks = raw[len(header):].rstrip(b"\n").split(b"\n\n")
        sizes = {len(b.split(b"\n")) for b in blocks}
        gaps = []
        for b in blocks:
            t = [float(line.split(b",", 1)[0]) for line in b.split(b"\n")]
            gaps.extend(np.diff(t))
        spacing_err = float(np.max(np.abs(np.array(gaps) - 0.05)))
        checks.append(raw.startswith(header) and len(blocks) == n_traj and sizes == {k + 1}
                      and spacing_err <= 1e-12 and raw.endswith(b"\n")
                      and b"\r" not in raw)
        if k == 1:
            times = [line.split(b",", 1)[0] for line in raw.split(b"\n")[1:7]]
            checks.append(times == [b"0", b"0.050000000000000003", b"", b"6",
                                    b"6.0499999999999998", b""])
    verdict(9, all(checks), "N=100 K=1 -> 50 x 2, N=100 K=9 -> 10 x 10, "
                            "spacing 0.05 +- 1e-12, exact header and time bytes", 5)
