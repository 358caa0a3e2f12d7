"""Acceptance criteria on the desk configuration.

Each criterion test records one PASS/FAIL line, printed in the terminal
summary.  The two desk sweeps are run once per session; set
FRACBURGERS_ACCEPTANCE_OUT to keep their output tree.
"""

import math
import os

import numpy as np
import pytest

from fracburgers.acceptance import build_context, evaluate, supplementary_lines
from fracburgers.diagnostics import time_average, window_weights
from fracburgers.spectral import NormRequest

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def ctx(tmp_path_factory):
    out = os.environ.get("FRACBURGERS_ACCEPTANCE_OUT") or tmp_path_factory.mktemp("acceptance")
    return build_context(out, seed_check=True)


@pytest.fixture(scope="module")
def criteria(ctx):
    results = {c.number: c for c in evaluate(ctx)}
    return results


def check(criteria, number):
    c = criteria[number]
    ACCEPTANCE_LINES.append(c.line())
    assert c.passed, c.line()


class TestCriteria:
    def test_01_exactness(self, criteria):
        check(criteria, 1)

    def test_02_integrator_order(self, criteria):
        check(criteria, 2)

    def test_03_energy_budget(self, criteria):
        check(criteria, 3)

    def test_04_maximum_principle(self, criteria):
        check(criteria, 4)

    def test_05_norm_scaling(self, criteria):
        check(criteria, 5)

    def test_06_structure_functions(self, criteria):
        check(criteria, 6)

    def test_07_flatness(self, criteria):
        check(criteria, 7)

    def test_08_spectrum(self, criteria):
        check(criteria, 8)

    def test_09_hs_upper_bound(self, criteria):
        check(criteria, 9)

    def test_10_determinism(self, criteria):
        check(criteria, 10)

    def test_supplementary(self, ctx, criteria):
        ACCEPTANCE_LINES.extend(supplementary_lines(ctx))


def runs_with_windows(ctx):
    for alpha, rep in ctx.reports.items():
        for nu in sorted(rep.runs):
            yield alpha, nu, rep.runs[nu], rep.window, rep.analyses[nu]


class TestRunInvariants:
    def test_every_run_completed(self, ctx):
        for rep in ctx.reports.values():
            assert rep.complete, rep.failures

    def test_zero_mode(self, ctx):
        for _, _, run, _, _ in runs_with_windows(ctx):
            assert run.final_state.field.coeffs[0] == 0

    def test_sup_and_w11_bounds(self, ctx):
        for _, _, run, _, _ in runs_with_windows(ctx):
            assert max(r.supnorm_margin for r in run.records) <= 1.05
            assert max(r.w11_margin for r in run.records) <= 1.05

    def test_power_mean_ordering(self, ctx):
        for _, _, run, win, _ in runs_with_windows(ctx):
            for req in (NormRequest.parse("H1"), NormRequest.parse("W1,inf")):
                assert time_average(run, win, req, 2.0) >= time_average(run, win, req, 1.0) * (1 - 1e-12)

    def test_sp_monotone_at_finest_scale(self, ctx):
        for _, _, run, win, a in runs_with_windows(ctx):
            assert a.ells[0] * a.n == pytest.approx(1) and a.ells[1] * a.n == pytest.approx(2)
            for p, vals in a.sp.items():
                assert vals[0] <= vals[1], (run.nu, p)

    def test_sp_triangle_bound(self, ctx):
        for _, _, run, win, a in runs_with_windows(ctx):
            for p, vals in a.sp.items():
                bound = 2.0**p * time_average(run, win, lambda r, p=p: r.sup**p)
                assert np.all(vals <= bound * (1 + 1e-12)), (run.nu, p)

    def test_spectrum_positive(self, ctx):
        for _, _, _, _, a in runs_with_windows(ctx):
            assert np.all(a.spectrum > 0)

    def test_window_shared_and_covered(self, ctx):
        for _, _, run, win, _ in runs_with_windows(ctx):
            w = window_weights(run.times, win.T1, win.T2)
            assert w.sum() == pytest.approx(1.0)
            assert win.T2 / win.T1 >= 1.5

    def test_c_tilde_stable(self, ctx):
        lines = []
        ok = True
        for alpha, rep in ctx.reports.items():
            vals = [a.C_tilde_run for a in rep.analyses.values()]
            spread = max(vals) / min(vals)
            ok &= spread < 2.0
            lines.append(f"a={alpha:g} spread {spread:.3f}")
        assert ok, "; ".join(lines)

    def test_upper_envelopes(self, ctx):
        # S_p <= C ell^p nu^-beta(p-1) on J1 and S_p <= C ell on J2; record the constants
        for alpha, rep in ctx.reports.items():
            part, beta = rep.plan.partition, rep.plan.beta
            env1, env2 = {}, {}
            for nu, a in rep.analyses.items():
                lo, hi = part.bounds(nu)
                for p in (2.0, 3.0, 4.0):
                    j1 = a.ells <= lo
                    j2 = (a.ells > lo) & (a.ells <= hi)
                    if j1.any():
                        r = a.sp[p][j1] / (a.ells[j1] ** p * nu ** (-beta * (p - 1)))
                        env1[p] = max(env1.get(p, 0.0), float(r.max()))
                    if j2.any():
                        env2[p] = max(env2.get(p, 0.0), float((a.sp[p][j2] / a.ells[j2]).max()))
            assert all(math.isfinite(v) and v > 0 for v in (*env1.values(), *env2.values()))

            def txt(env):
                return ", ".join(f"p={p:g}: {v:.3g}" for p, v in sorted(env.items())) or "no lattice separations"

            ACCEPTANCE_LINES.append(f"info a={alpha:g}: envelope constants J1 [{txt(env1)}]; J2 [{txt(env2)}]")
