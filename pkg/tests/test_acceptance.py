"""Acceptance checks, one test per criterion.

Each test appends a line ``AC-k PASS|FAIL <what> (<runtime> / <budget>)`` that
the conftest prints in the terminal summary.  Tolerances are fixed here and
never adapted to the observed values.
"""
import json
import math
import os
import time

import numpy as np
import pytest

from heatlab.cli import main
from heatlab.green import LEMMA_B1_TARGETS, green_image, green_spectral, lemma_b1_fits
from heatlab.grid import GridSpec, ScalarField
from heatlab.lab import IndicatorRectangle, RectangleSpec, fdd_convergence, hypothesis3_check, manthey_integral
from heatlab.mild import (
    DriftSpec,
    InitialData,
    psi_functional,
    sample_white_at,
    sample_white_solution,
    white_solution_variance,
)
from heatlab.noise import (
    NoiseSpec,
    SeedPolicy,
    donsker_field,
    integrate_zeta,
    kac_stroock_box,
    parity_count,
    parity_covariance_exact,
    sample_poisson_plane,
)

PI = math.pi


class Criterion:
    def __init__(self, log, number: int, title: str, budget: float):
        self.log, self.number, self.title, self.budget = log, number, title, budget

    def __enter__(self):
        self.t0 = time.perf_counter()
        self.ok = False
        self.detail = ""
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        timely = elapsed < self.budget
        passed = self.ok and timely and exc_type is None
        detail = self.detail if exc_type is None else f"error: {exc}"
        if not timely:
            detail += " [over time budget]"
        self.log.append(f"AC-{self.number} {'PASS' if passed else 'FAIL'} {self.title}: {detail} "
                        f"({elapsed:.1f}s / {self.budget:g}s)")
        self.passed = passed
        return False


def test_ac01_green_series_agreement(acceptance_log):
    with Criterion(acceptance_log, 1, "sine and image series agree", 1.0) as c:
        pts = np.arange(1, 34) / 34
        X, Y = np.meshgrid(pts, pts, indexing="ij")
        worst = max(float(np.max(np.abs(green_spectral(t, X, Y) - green_image(t, X, Y))))
                    for t in (1e-3, 1e-2, 1e-1, 1.0))
        c.ok = worst <= 1e-9
        c.detail = f"max |spectral - image| = {worst:.2e} <= 1e-9"
    assert c.passed


def test_ac02_integral_exponents(acceptance_log):
    with Criterion(acceptance_log, 2, "integral exponents at alpha=2", 10.0) as c:
        fits = lemma_b1_fits(2.0, t=0.5, x=0.5, scales=np.logspace(-4, -1, 7))
        parts = []
        c.ok = True
        for kind, target in LEMMA_B1_TARGETS.items():
            slope = fits[kind].slope
            c.ok &= abs(slope - target) <= 0.05
            parts.append(f"{kind} {slope:.3f} (target {target})")
        c.detail = ", ".join(parts) + ", window +-0.05"
    assert c.passed


def test_ac03_exact_gaussian_solution(acceptance_log):
    with Criterion(acceptance_log, 3, "exact Gaussian solution variance", 30.0) as c:
        M, K = 10_000, 64
        policy = SeedPolicy(2024)
        x = np.array([sample_white_at(policy.stream(r), [0.5], [0.5], K)[0, 0] for r in range(M)])
        sq = x * x
        est, se = sq.mean(), sq.std(ddof=1) / math.sqrt(M)
        ref = float(white_solution_variance(0.5, 0.5, K))
        stationary = float(white_solution_variance(math.inf, 0.5))
        truncated = float(white_solution_variance(math.inf, 0.5, K))
        c.ok = abs(est - ref) <= 3 * se and abs(stationary - 0.125) <= 1e-9
        c.detail = (f"empirical {est:.5f} vs series {ref:.5f} (|diff| {abs(est - ref) / se:.2f} se <= 3); "
                    f"stationary closed form {stationary!r} vs 1/8; 64-mode sum {truncated:.6f}")
    assert c.passed


def _fdd_check(log, number, model):
    with Criterion(log, number, f"f.d.d. convergence, {model}", 600.0) as c:
        fam = [NoiseSpec(model, n) for n in (4, 16, 64, 256)]
        rep = fdd_convergence(fam, [(0.5, 0.5)], M=2000, seed=0, threads=os.cpu_count() or 1)
        rows = rep.select("ks_marginal(0.5,0.5)")
        ks = [r.value for r in rows]
        se = rows[0].stderr
        mono = all(b <= a + 2 * se for a, b in zip(ks, ks[1:]))
        c.ok = mono and ks[-1] <= 0.05
        c.detail = (f"KS {', '.join(f'{v:.4f}' for v in ks)} at n=4..256, se {se:.4f}, "
                    f"non-increasing within 2 se: {mono}, final <= 0.05: {ks[-1] <= 0.05}; report {rep.status}")
    return c


def test_ac04_fdd_kac_stroock(acceptance_log):
    assert _fdd_check(acceptance_log, 4, "kac_stroock").passed


def test_ac04_fdd_donsker(acceptance_log):
    assert _fdd_check(acceptance_log, 4, "donsker").passed


def test_ac05_parity_covariance(acceptance_log):
    with Criterion(acceptance_log, 5, "parity correlation", 120.0) as c:
        rng = np.random.default_rng(55)
        pairs = rng.uniform(0.05, 1.0, size=(10, 4))  # (s, y, t, x) in the unit square
        M = 100_000
        worst = 0.0
        c.ok = True
        for n in (4, 64):
            r = math.sqrt(n)
            q = np.concatenate([pairs[:, :2], pairs[:, 2:]]) * r
            U, V = kac_stroock_box(n, 1.0)
            policy = SeedPolicy(5)
            acc = np.zeros(10)
            for rep in range(M):
                par = parity_count(sample_poisson_plane(policy.stream(rep, n), U, V), q)
                acc += 1 - 2 * (par[:10] ^ par[10:])
            rho = acc / M
            exact = parity_covariance_exact(n, pairs[:, 0], pairs[:, 1], pairs[:, 2], pairs[:, 3])
            se = np.sqrt(np.maximum(1 - exact ** 2, 1e-12) / M)
            z = np.abs(rho - exact) / se
            worst = max(worst, float(z.max()))
            c.ok &= bool(np.all(z <= 3))
        c.detail = f"20 comparisons (n=4, 64; M=1e5), worst deviation {worst:.2f} se <= 3"
    assert c.passed


def test_ac06_second_moment_constant(acceptance_log):
    with Criterion(acceptance_log, 6, "second moment on a doubling rectangle", 120.0) as c:
        rect = RectangleSpec(0.3, 0.5, 0.3, 0.5)
        f = IndicatorRectangle(0.0, 0.5, 0.0, 1.0)
        rep = hypothesis3_check(NoiseSpec.kac_stroock(4), f, rect, 2, [4, 16, 64], M=10_000, seed=0,
                                threads=os.cpu_count() or 1)
        bound = rect.second_moment_bound
        rows = rep.select("moment_ratio(m=2)")
        c.ok = all(r.value <= bound + 3 * r.stderr for r in rows)
        c.detail = (f"ratios {', '.join(f'{r.value:.3f}+-{r.stderr:.3f}' for r in rows)} at n=4,16,64 "
                    f"<= {bound:g} + 3 se (alpha={rect.alpha:g})")
    assert c.passed


def test_ac07_donsker_sheet_variance(acceptance_log):
    with Criterion(acceptance_log, 7, "Donsker partial sums have variance t*x", 60.0) as c:
        M = 10_000
        points = [(0.5, 0.5), (0.25, 0.75), (0.75, 0.25), (1.0, 1.0)]
        worst = 0.0
        c.ok = True
        for n in (4, 16, 64):
            g = GridSpec(1.0, n, n)
            policy = SeedPolicy(7)
            z = np.empty((M, len(points)))
            for r in range(M):
                f = donsker_field(policy.stream(r, n), n, g)
                z[r] = [integrate_zeta(f, t, x) for t, x in points]
            for k, (t, x) in enumerate(points):
                sq = z[:, k] ** 2
                dev = abs(sq.mean() - t * x) / (sq.std(ddof=1) / math.sqrt(M))
                worst = max(worst, dev)
                c.ok &= dev <= 3
        c.detail = f"12 (n, point) cases, worst deviation {worst:.2f} se <= 3"
    assert c.passed


def test_ac08_covariance_mass_growth(acceptance_log):
    with Criterion(acceptance_log, 8, "I(n,1,1/n) grows", 60.0) as c:
        ns = (8, 32, 128, 512)
        vals = [manthey_integral(n, 1.0) for n in ns]
        inc = all(b > a for a, b in zip(vals, vals[1:]))
        ratio = vals[-1] / vals[0]
        c.ok = inc and ratio >= 2
        c.detail = (f"I = {', '.join(f'{v:.5f}' for v in vals)}; strictly increasing: {inc}; "
                    f"I(512)/I(8) = {ratio:.4f} (required >= 2)")
    assert c.passed


def test_ac09_quasilinear_oracle(acceptance_log):
    with Criterion(acceptance_log, 9, "linear drift against closed form", 60.0) as c:
        g = GridSpec(1.0, 256, 256)
        U = psi_functional(ScalarField.zeros(g), InitialData.sine(), DriftSpec.linear(-1.0))
        tt, xx = np.meshgrid(g.t_nodes, g.x_nodes, indexing="ij")
        err = float(np.max(np.abs(U.values - np.exp(-(PI * PI + 1) * tt) * np.sin(PI * xx))))
        c.ok = err <= 1e-3
        c.detail = f"max error {err:.2e} <= 1e-3 at 256x256"
    assert c.passed


def test_ac10_psi_lipschitz(acceptance_log):
    with Criterion(acceptance_log, 10, "psi is Lipschitz", 120.0) as c:
        g = GridSpec(0.5, 64, 64)
        L = 1.0
        b = DriftSpec(np.sin, L, "sin")
        u0 = InitialData.sine()
        policy = SeedPolicy(10)
        ratios = []
        for r in range(20):
            rng = policy.stream(r)
            e1 = sample_white_solution(rng, g)
            scale = 10 ** rng.uniform(-3, 0)
            bump = ScalarField.from_function(
                g, lambda t, x, a=rng.normal(size=3): t * (a[0] * np.sin(PI * x) + a[1] * np.sin(3 * PI * x) + a[2] * x * (1 - x)))
            e2 = ScalarField(g, e1.values + scale * bump.values + scale * sample_white_solution(rng, g).values)
            d_in = float(np.max(np.abs(e1.values - e2.values)))
            d_out = float(np.max(np.abs(psi_functional(e1, u0, b).values - psi_functional(e2, u0, b).values)))
            ratios.append(d_out / d_in)
        const = math.exp(L * g.t_max)
        c.ok = max(ratios) <= const
        c.detail = f"20 pairs, ratio range [{min(ratios):.3f}, {max(ratios):.3f}] <= e^(L T) = {const:.3f}"
    assert c.passed


def _strip_clock(path):
    d = json.loads(path.read_text())
    d.pop("wall_clock_seconds", None)
    return d


def test_ac11_determinism(acceptance_log, tmp_path):
    with Criterion(acceptance_log, 11, "byte-identical reruns", 300.0) as c:
        jobs = {
            "simulate": (["simulate"], {"grid": {"t_max": 0.5, "nt": 32, "nx": 32}, "replicas": 4,
                                        "noise": {"model": "kac_stroock", "n": 64},
                                        "drift": {"name": "linear", "c": -1.0}, "u0": {"name": "sine"}}),
            "fdd": (["converge", "fdd"], {"noise": {"model": "donsker"}, "n_list": [4, 16], "replicas": 500}),
            "hyp3": (["converge", "hyp3"], {"n_list": [4, 8], "replicas": 300}),
            "green": (["green-check"], {}),
        }
        same = True
        compared = 0
        for name, (argv, cfg) in jobs.items():
            cfg_path = tmp_path / f"{name}.json"
            cfg_path.write_text(json.dumps(cfg))
            outs = []
            for tag, threads in (("a", "1"), ("b", "1"), ("c", "8")):
                out = tmp_path / f"{name}_{tag}"
                code = main(argv + ["--config", str(cfg_path), "--seed", "77", "--threads", threads,
                                    "--output", str(out)])
                assert code in (0, 1, 4)
                outs.append(out)
            files = sorted(p for p in os.listdir(outs[0]) if p != "manifest.json")
            for other in outs[1:]:
                assert sorted(p for p in os.listdir(other) if p != "manifest.json") == files
                for f in files:
                    compared += 1
                    same &= (outs[0] / f).read_bytes() == (other / f).read_bytes()
                same &= _strip_clock(outs[0] / "manifest.json") == _strip_clock(other / "manifest.json")
        c.ok = same
        c.detail = f"{compared} data-file comparisons across reruns and --threads 1 vs 8, all identical: {same}"
    assert c.passed
