import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from levy_em.analysis import (
    ErrorEstimate,
    ErrorFunctional,
    EstimateConfig,
    InadmissibleError,
    as_rate_experiment,
    baseline_lipschitz_rate,
    check_admissible,
    error_functional,
    estimate_lp_error,
    fit_rate,
    functional_value,
    holder_gaps,
    lp_estimate,
    simulate_functionals,
    theoretical_rate,
)
from levy_em.levy import LevySpec, sample_lattice
from levy_em.sde import DriftSpec, euler_maruyama, reference_solution

alphas = st.floats(0.05, 2.0)
tildes = st.one_of(st.floats(0.05, 2.0), st.just(math.inf))
betas = st.floats(0.01, 3.0)
ps = st.floats(2.001, 50.0)


def brute_holder(err, tau):
    n = len(err) - 1
    best = 0.0
    for s in range(n + 1):
        for t in range(s + 1, n + 1):
            best = max(best, float(np.linalg.norm(err[t] - err[s])) / ((t - s) / n) ** tau)
    return best


# --- admissibility and rates --------------------------------------------------------


def test_admissibility_examples():
    assert check_admissible(1.0, 1.0, 0.6).admissible
    assert check_admissible(1.0, 1.0, 0.6).margin == pytest.approx(0.1)
    assert not check_admissible(1.0, 1.0, 0.4).admissible
    # boundary is excluded
    assert not check_admissible(1.0, 1.0, 0.5).admissible
    assert check_admissible(2.0, math.inf, 0.01).admissible
    assert not check_admissible(0.5, 0.5, 0.9).admissible


def test_admissibility_rejects_bad_input():
    for args in ((0.0, 1.0, 0.5), (2.5, 1.0, 0.5), (1.0, 0.0, 0.5), (1.0, 1.0, 0.0)):
        with pytest.raises(ValueError):
            check_admissible(*args)


def test_rate_examples():
    assert theoretical_rate(1.0, 1.0, 0.6, 2.01) == pytest.approx(0.5 + 1 / 2.01)
    assert theoretical_rate(2.0, math.inf, 0.5, 4) == pytest.approx(0.75)
    assert theoretical_rate(1.5, 1.5, 0.35, 3) == pytest.approx(0.5 + 0.35 / 1.5)
    assert theoretical_rate(1.0, 1.0, 0.9, 10) == pytest.approx(0.6)


def test_rate_requires_p_above_two_and_admissibility():
    with pytest.raises(ValueError):
        theoretical_rate(1.0, 1.0, 0.6, 2.0)
    with pytest.raises(InadmissibleError):
        theoretical_rate(1.0, 1.0, 0.4, 3.0)


def test_baseline_rate():
    assert baseline_lipschitz_rate(1.5, 2) == pytest.approx(0.5)
    assert baseline_lipschitz_rate(1.5, 1) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        baseline_lipschitz_rate(1.0, 0.5)


@settings(max_examples=300)
@given(a=alphas, at=tildes, b=betas, p=ps)
def test_rate_in_unit_band(a, at, b, p):
    assume(check_admissible(a, at, b).admissible)
    r = theoretical_rate(a, at, b, p)
    assert 0.5 <= r <= 1.0


@settings(max_examples=300)
@given(a=alphas, at=tildes, b=betas, p=ps, db=st.floats(0, 1), dp=st.floats(0, 10))
def test_rate_monotone(a, at, b, p, db, dp):
    assume(check_admissible(a, at, b).admissible)
    r = theoretical_rate(a, at, b, p)
    assert theoretical_rate(a, at, b + db, p) >= r
    assert theoretical_rate(a, at, b, p + dp) <= r


@settings(max_examples=200)
@given(a=alphas, b=betas, p1=ps, p2=ps)
def test_rate_p_free_without_tail_constraint(a, b, p1, p2):
    assume(check_admissible(a, math.inf, b).admissible)
    assert theoretical_rate(a, math.inf, b, p1) == theoretical_rate(a, math.inf, b, p2)


@settings(max_examples=300)
@given(a=alphas, at=tildes, b=betas, db=st.floats(0, 1))
def test_admissibility_monotone_in_beta(a, at, b, db):
    if check_admissible(a, at, b).admissible:
        assert check_admissible(a, at, b + db).admissible


# --- functionals ----------------------------------------------------------------------


def test_functional_parse():
    assert ErrorFunctional.parse("holder:0.25") == ErrorFunctional.holder(0.25)
    assert ErrorFunctional.parse({"kind": "terminal"}) == ErrorFunctional.terminal()
    assert ErrorFunctional.parse("sup").label == "sup"
    assert ErrorFunctional.holder(0.2).label == "holder0.2"
    for bad in ("holder:0.5", "energy", "holder:-0.1"):
        with pytest.raises(ValueError):
            ErrorFunctional.parse(bad)


def test_linear_error_holder_seminorm():
    c = 0.37
    err = (c * np.arange(65) / 64)[:, None]
    assert functional_value(err, ErrorFunctional.holder(0.0)) == pytest.approx(c)
    # tau > 0: the full interval is extremal
    assert functional_value(err, ErrorFunctional.holder(0.3)) == pytest.approx(c)


def test_exact_holder_matches_brute_force(rng):
    err = np.cumsum(rng.standard_cauchy((65, 2)), axis=0) * 0.01
    for tau in (0.0, 0.2, 0.45):
        assert functional_value(err, ErrorFunctional.holder(tau), exact=True) == pytest.approx(brute_holder(err, tau))


def test_dyadic_holder_close_to_exact(rng):
    lat = sample_lattice(LevySpec.isotropic_stable(1.2), 4096, rng)
    drift = DriftSpec.holder_power(0.5)
    ref = reference_solution(drift, lat)
    approx = euler_maruyama(drift, lat, 256)
    f = ErrorFunctional.holder(0.2)
    exact = error_functional(ref, approx, f, exact=True)
    dyadic = error_functional(ref, approx, f, exact=False)
    assert 0.7 <= dyadic / exact <= 1.0


def test_holder_gap_selection():
    assert list(holder_gaps(8, exact=False)) == [1, 2, 4, 8]
    assert len(holder_gaps(4096)) == 4096
    assert len(holder_gaps(8192)) == 14


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**63), log_n=st.integers(0, 6))
def test_sup_dominates_terminal(seed, log_n):
    lat = sample_lattice(LevySpec.cylindrical_stable(0.8, 2), 128, seed)
    drift = DriftSpec.weierstrass(0.4)
    ref = reference_solution(drift, lat)
    approx = euler_maruyama(drift, lat, 2**log_n)
    assert error_functional(ref, approx, "sup") >= error_functional(ref, approx, "terminal")


def test_error_functional_grid_mismatch():
    lat = sample_lattice(LevySpec.brownian(), 64, 0)
    a = euler_maruyama(DriftSpec.zero(), lat, 16)
    b = euler_maruyama(DriftSpec.zero(), lat, 64)
    with pytest.raises(ValueError):
        error_functional(a, euler_maruyama(DriftSpec.zero(), sample_lattice(LevySpec.brownian(), 48 * 0 + 32, 0), 32), "sup")
    assert error_functional(b, a, "sup") == 0.0


# --- L_p estimation ---------------------------------------------------------------------


@settings(max_examples=100)
@given(
    values=st.lists(st.floats(0, 1e3, allow_subnormal=False), min_size=16, max_size=200),
    p=st.floats(1, 6),
    dp=st.floats(0.01, 4),
)
def test_power_mean_monotone_in_p(values, p, dp):
    lo, _ = lp_estimate(values, p)
    hi, _ = lp_estimate(values, p + dp)
    assert hi >= lo * (1 - 1e-12)


def test_lp_estimate_ci_against_bootstrap(rng):
    x = rng.exponential(size=4000)
    value, ci = lp_estimate(x, 2.0)
    assert value == pytest.approx(math.sqrt(np.mean(x**2)))
    boot = [math.sqrt(np.mean(rng.choice(x, x.size) ** 2)) for _ in range(400)]
    assert ci == pytest.approx(1.96 * np.std(boot), rel=0.5)


def test_lp_estimate_zero():
    assert lp_estimate(np.zeros(50), 2.0) == (0.0, 0.0)


@pytest.mark.parametrize("drift", [DriftSpec.zero(), DriftSpec.constant(-0.4)], ids=lambda d: d.kind)
def test_exact_drifts_give_zero_error(drift):
    est = estimate_lp_error(EstimateConfig(LevySpec.isotropic_stable(1.0), drift, 16, 256, M=200, seed=3))
    assert est.value == 0.0 and est.ci == 0.0


def test_brownian_smooth_halving_ratio():
    base = dict(levy=LevySpec.brownian(), drift=DriftSpec.smooth_sine(1.0, 2.0), n_ref=4096, p=2.0, M=1000, seed=5)
    e64 = estimate_lp_error(EstimateConfig(n=64, **base))
    e128 = estimate_lp_error(EstimateConfig(n=128, **base))
    assert 1.5 <= e64.value / e128.value <= 2.5
    assert not e64.warnings


def test_estimate_argument_checks():
    base = dict(levy=LevySpec.brownian(), drift=DriftSpec.smooth_sine())
    with pytest.raises(ValueError):
        estimate_lp_error(EstimateConfig(n=64, n_ref=256, **base))
    with pytest.raises(ValueError):
        estimate_lp_error(EstimateConfig(n=3, n_ref=256, **base))
    with pytest.raises(ValueError):
        estimate_lp_error(EstimateConfig(n=8, n_ref=256, M=10, **base))
    with pytest.raises(ValueError):
        estimate_lp_error(EstimateConfig(n=8, n_ref=256, p=0.5, **base))


def test_inadmissible_estimate_warns():
    cfg = EstimateConfig(LevySpec.isotropic_stable(1.0), DriftSpec.holder_power(0.3), 8, 256, M=128)
    est = estimate_lp_error(cfg)
    assert est.value > 0
    assert est.warnings and "inadmissible" in est.warnings[0]


def test_simulation_is_deterministic_and_worker_free():
    args = (LevySpec.tempered_stable(1.3, 2.0), DriftSpec.weierstrass(0.5), [8, 32], 256, ["sup", "holder:0.1"], 300, 42)
    a = simulate_functionals(*args)
    b = simulate_functionals(*args, workers=3)
    assert a.shape == (300, 2, 2)
    assert np.array_equal(a, b)
    # path i does not depend on M
    c = simulate_functionals(*args[:5], 150, 42)
    assert np.array_equal(a[:150], c)


# --- rate fitting -----------------------------------------------------------------------


def synthetic(n_values, rate, noise=None, rng=None, rel_ci=0.02):
    out = []
    for n in n_values:
        v = 3.0 * n ** (-rate)
        if noise:
            v *= math.exp(noise * rng.standard_normal())
        out.append((n, ErrorEstimate(v, rel_ci * v, 1000)))
    return out


def test_fit_exact_power_law():
    rep = fit_rate(synthetic([16, 32, 64, 128, 256], 0.75))
    assert rep.fitted_slope == pytest.approx(0.75, abs=1e-9)
    assert rep.last_octave_slope == pytest.approx(0.75, abs=1e-9)
    assert rep.status == "fitted"


def test_fit_noisy_power_law():
    rng = np.random.default_rng(0)
    rep = fit_rate(synthetic(2 ** np.arange(4, 11), 1.0, noise=0.05, rng=rng, rel_ci=0.05))
    assert 0.9 <= rep.fitted_slope <= 1.1


def test_fit_flags_flat_errors():
    rep = fit_rate(synthetic([16, 32, 64, 128], 0.0))
    assert rep.status == "no convergence detected"


def test_fit_all_zero_is_exact():
    pts = [(n, ErrorEstimate(0.0, 0.0, 100)) for n in (8, 16, 32, 64)]
    rep = fit_rate(pts)
    assert rep.status == "exact" and rep.fitted_slope is None


def test_fit_needs_span():
    with pytest.raises(ValueError):
        fit_rate(synthetic([16, 32, 64], 1.0))
    with pytest.raises(ValueError):
        fit_rate(synthetic([16, 32], 1.0))


def test_fit_drops_noisy_points():
    pts = synthetic([16, 32, 64, 128, 256], 0.5)
    pts[2] = (64, ErrorEstimate(100.0, 80.0, 10))
    rep = fit_rate(pts)
    assert 64 not in rep.used
    assert rep.fitted_slope == pytest.approx(0.5, abs=1e-9)


def test_fit_weights_follow_ci():
    pts = synthetic([16, 32, 64, 128, 256], 1.0)
    pts[-1] = (256, ErrorEstimate(pts[-1][1].value * 2, pts[-1][1].value * 0.9, 10))
    weighted = fit_rate(pts).fitted_slope
    assert abs(weighted - 1.0) < 0.1


# --- pathwise -----------------------------------------------------------------------------


def test_pathwise_positive_case():
    rep = as_rate_experiment(
        LevySpec.brownian(), DriftSpec.smooth_sine(1.0, 2.0), [16, 32, 64, 128, 256], 2048, 400, 7, eps=0.1
    )
    assert rep.stable and not rep.growth_flagged
    assert rep.eta.shape == (400,)
    assert all(np.diff(rep.quantiles) >= 0)


def test_pathwise_holder_norm_included():
    args = (LevySpec.brownian(), DriftSpec.smooth_sine(), [16, 32, 64], 512, 128, 1)
    plain = as_rate_experiment(*args)
    holder = as_rate_experiment(*args, tau=0.2)
    assert np.all(holder.eta >= plain.eta)


def test_pathwise_negative_control_flags_growth():
    rep = as_rate_experiment(
        LevySpec.brownian(), DriftSpec.holder_power(0.05), [16, 32, 64, 128, 256], 2048, 400, 7, eps=0.0
    )
    assert rep.growth_flagged


def test_pathwise_argument_checks():
    with pytest.raises(ValueError):
        as_rate_experiment(LevySpec.brownian(), DriftSpec.zero(), [16], 256, 200, 0)
    with pytest.raises(ValueError):
        as_rate_experiment(LevySpec.brownian(), DriftSpec.zero(), [16, 64], 256, 200, 0)
