import copy

import numpy as np
import pytest

from brox.certify import (
    CSV_SCHEMA,
    certify_boundary_and_kkt,
    certify_distance,
    certify_fval_rate,
    certify_gradient,
    certify_trajectory,
    counterexample_trajectory,
    distance_increases,
    find_linf_distance_increase,
)
from brox.exceptions import SearchFailure
from brox.geometry import NormDescriptor, norm_value
from brox.methods import RadiusSchedule, run_bpm, run_linearized
from brox.problems import make_logistic, make_quadratic

ISO = make_quadratic([1, 1], 0, [0, 0])


@pytest.fixture(scope="module")
def iso_traj():
    return run_bpm(ISO, NormDescriptor.l2(2), [5, 0], RadiusSchedule.constant(1), iters=10,
                   stop_tol=1e-12)


@pytest.fixture(scope="module")
def cx():
    return find_linf_distance_increase()


def test_isotropic_all_pass(iso_traj):
    report = certify_trajectory(iso_traj, ISO.x_star, ISO.f_star)
    assert report.passed, report.to_text()
    assert not report["collinearity"].applicable
    assert not report["linearized_distance"].applicable


def test_fval_rate_first_step_numbers(iso_traj):
    r0, r1 = iso_traj[0], iso_traj[1]
    bound = (r0.f - 0) / (1 + r0.t / np.linalg.norm(r1.x))
    assert r1.f == pytest.approx(8.0) and bound == pytest.approx(10.0)
    assert certify_fval_rate(iso_traj, ISO.x_star, 0.0).passed


def test_gradient_average_numbers(iso_traj):
    grads = [r.dual_grad_norm for r in iso_traj.records[1:]]
    assert np.mean(grads) == pytest.approx(2.0, abs=1e-12)
    mono, avg = certify_gradient(iso_traj, 0.0)
    assert mono.passed and avg.passed and avg.worst_violation == 0.0


def test_distance_numbers(iso_traj):
    d2 = [float(r.x @ r.x) for r in iso_traj]
    assert np.allclose(d2, [25, 16, 9, 4, 1, 0], atol=1e-12)
    rec, fin = certify_distance(iso_traj, ISO.x_star, 0.0)
    assert rec.passed and fin.passed and fin.worst_step == 5


def test_boundary_alignment_first_step(iso_traj):
    r0, r1 = iso_traj[0], iso_traj[1]
    assert r0.step_length == pytest.approx(1.0)
    assert -ISO.gradient(r1.x) @ (r1.x - r0.x) == pytest.approx(4.0)
    bnd, ali, col = certify_boundary_and_kkt(iso_traj, ISO.x_star)
    assert bnd.passed and ali.passed and not col.applicable


def test_ellipsoid_run_passes():
    q = make_quadratic([1, 25], 4, [0, 0])
    norm = NormDescriptor.ellipsoid(np.diag([4.0, 1.0]))
    traj = run_bpm(q, norm, [3, -2], RadiusSchedule.constant(0.4), iters=30)
    report = certify_trajectory(traj, q.x_star, q.f_star)
    assert report.passed, report.to_text()
    assert report["distance_recursion"].checked > 0
    assert report["collinearity"].checked > 0
    assert report["collinearity"].worst_violation <= 1e-6


def test_finite_convergence_guarantee_from_sum_of_squares():
    traj = run_bpm(ISO, NormDescriptor.l2(2), [3, 4], RadiusSchedule.constant(1), iters=25)
    _, fin = certify_distance(traj, ISO.x_star, 0.0)
    # sum of t_k^2 reaches 25 at step 25; the certificate checks that iterate
    assert fin.passed and fin.worst_step in (5, 25)
    assert traj[5].f <= 1e-10


def test_sweep_of_quadratics_all_norms_pass(rng):
    for seed in range(100):
        d = 2 + seed % 3
        norm = [NormDescriptor.l1(d), NormDescriptor.l2(d), NormDescriptor.linf(d)][seed % 3]
        q = make_quadratic(10 ** rng.uniform(0, 2, d), seed, rng.standard_normal(d))
        x0 = q.x_star + rng.standard_normal(d) * 3
        traj = run_bpm(q, norm, x0, RadiusSchedule.constant(rng.uniform(0.1, 1)), iters=15)
        report = certify_trajectory(traj, q.x_star, q.f_star)
        assert report.passed, report.to_text()


def test_corrupted_trajectory_fails(iso_traj):
    bad = copy.deepcopy(iso_traj)
    # pretend step 2 went uphill
    bad.records[3].f = bad.records[2].f + 1.0
    bad.records[3].dual_grad_norm += 2.0
    report = certify_trajectory(bad, ISO.x_star, 0.0)
    assert not report.passed
    assert not report["monotone_descent"].passed and report["monotone_descent"].worst_step == 2
    assert not report["gradient_monotone"].passed
    assert "FAIL" in report.to_csv()


def test_report_is_idempotent(iso_traj):
    a = certify_trajectory(iso_traj, ISO.x_star, 0.0)
    b = certify_trajectory(iso_traj, ISO.x_star, 0.0)
    assert a.to_csv() == b.to_csv() and a.to_text() == b.to_text()


def test_report_csv_layout(iso_traj):
    lines = certify_trajectory(iso_traj, ISO.x_star, 0.0).to_csv().splitlines()
    assert lines[0] == CSV_SCHEMA
    assert lines[1] == "certificate,pass,worst_violation,worst_step,slack"
    for line in lines[2:]:
        name, status, viol, step, slack = line.split(",")
        assert status in ("pass", "FAIL", "n/a")
        float(viol), int(step), float(slack)


def test_certificate_invariants(iso_traj):
    for c in certify_trajectory(iso_traj, ISO.x_star, 0.0).certificates:
        assert c.worst_violation >= 0
        if c.applicable:
            assert c.passed == (c.worst_violation <= c.slack_used)


def test_linearized_run_marks_exact_certificates_na():
    f = make_quadratic([1, 9], 2, [0, 0])
    traj = run_linearized(f, NormDescriptor.l2(2), [4, 1], RadiusSchedule.polyak(), iters=20)
    report = certify_trajectory(traj, f.x_star, f.f_star)
    assert not report["gradient_monotone"].applicable
    assert report["linearized_distance"].applicable and report["linearized_distance"].passed


def test_logistic_frank_wolfe_run_passes():
    rng = np.random.default_rng(5)
    f = make_logistic(rng.standard_normal((40, 3)), np.where(rng.random(40) < .5, 1., -1.), 0.1)
    traj = run_bpm(f, NormDescriptor.linf(3), [2, -2, 1], RadiusSchedule.constant(0.3), iters=10)
    assert all(r.brox_path == "frank_wolfe" for r in traj.records[:-1])
    report = certify_trajectory(traj, f.x_star, f.f_star)
    assert report.passed, report.to_text()


# -- counterexample -----------------------------------------------------------------

def test_counterexample_properties(cx):
    q = make_quadratic(cx.eigenvalues, cx.seed, cx.x_star)
    assert np.allclose(q.A, cx.A)
    assert abs(np.abs(cx.x1 - cx.x0).max() - cx.t) <= 1e-6
    assert q.value(cx.x1) <= q.value(cx.x0)
    assert cx.dist1 - cx.dist0 >= 0.01 * cx.dist0
    assert np.abs(cx.x1 - cx.x_star).max() == pytest.approx(cx.dist1)


def test_counterexample_matches_fixture(cx):
    from pathlib import Path
    from brox.cli import ExperimentConfig
    cfg = ExperimentConfig.load(Path(__file__).parent / "fixtures" / "linf_counterexample.cfg")
    assert cfg.seed == cx.seed and np.array_equal(cfg.x0, cx.x0)
    assert cfg.radius == f"const:{cx.t!r}"


def test_counterexample_trajectory_still_certifies(cx):
    traj = counterexample_trajectory(cx)
    report = certify_trajectory(traj, cx.x_star, 0.0)
    assert report.passed, report.to_text()
    assert not report["distance_recursion"].applicable
    incs = distance_increases(traj, cx.x_star)
    assert incs and incs[0][0] == 0
    assert any("increased at step 0" in n for n in report.notes)
    assert np.allclose(traj[1].x, cx.x1, atol=1e-12)


def test_counterexample_search_failure():
    with pytest.raises(SearchFailure):
        find_linf_distance_increase(range(0))


def test_l2_never_increases_distance(rng):
    for seed in range(30):
        q = make_quadratic(10 ** rng.uniform(0.5, 2.5, 2), seed, [0, 0])
        x0 = rng.uniform(-1, 1, 2)
        traj = run_bpm(q, NormDescriptor.l2(2), x0, RadiusSchedule.constant(0.3), iters=5)
        assert not distance_increases(traj, q.x_star)
        assert all(norm_value(traj.norm, b.x) <= norm_value(traj.norm, a.x) + 1e-12
                   for a, b in zip(traj.records, traj.records[1:]))
