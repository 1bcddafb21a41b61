import math

import numpy as np
import pytest
from scipy import integrate, optimize, stats

from mzwlln.errors import UnavailableError, ValidationError
from mzwlln.innovations import (
    CustomEmpirical,
    GaussianControl,
    HalfCauchyRemark,
    StudentT,
    Symmetrized,
    SymmetricAlphaStable,
    SymmetricPareto,
    is_usable,
    load_empirical,
    make_model,
    sample,
    symmetrize,
    tail,
    three_series_check,
    truncate,
    truncated_moment,
    truncated_tail_quasinorm_bound,
    weak_quasinorm,
)
from mzwlln.streams import InnovationStream
from mzwlln.weights import Custom, Delta, PowerLaw

MILLION = 1_000_000

ANALYTIC = [
    SymmetricPareto(1.8),
    StudentT(3.0),
    SymmetricAlphaStable(1.8),
    HalfCauchyRemark(),
    GaussianControl(1.0),
]


def draws(model, n=MILLION, seed=0):
    return InnovationStream(seed).innovations(model, 0, n - 1)


# ---------------------------------------------------------------- sample


def test_sample_is_deterministic():
    g = GaussianControl()
    a = sample(g, InnovationStream(42), index=3)
    b = sample(g, InnovationStream(42), index=3)
    assert a == b
    assert sample(g, InnovationStream(43), index=3) != a


def test_pareto_empirical_tail_within_wilson_widths():
    from mzwlln.montecarlo import wilson_interval

    x = np.abs(draws(SymmetricPareto(1.8)))
    for t in (2.0, 5.0, 10.0):
        k = int(np.count_nonzero(x > t))
        lo, hi = wilson_interval(k, x.size)
        assert abs(k / x.size - t**-1.8) <= 3 * (hi - lo)


def test_stable_trimmed_mean_near_zero():
    x = draws(SymmetricAlphaStable(1.8), seed=3)
    trimmed = stats.trim_mean(x, 0.01)
    core = stats.trimboth(x, 0.01)
    assert abs(trimmed) <= 4 * np.std(core) / math.sqrt(core.size)


@pytest.mark.parametrize("model", ANALYTIC, ids=lambda m: m.family)
def test_empirical_tail_within_three_standard_errors(model):
    x = np.abs(draws(model, seed=7))
    for t in np.geomspace(0.5, 8.0, 5):
        p = float(model.tail(t))
        phat = np.count_nonzero(x > t) / x.size
        assert abs(phat - p) <= 3 * math.sqrt(p * (1 - p) / x.size)


def test_student_t_sampler_ks():
    x = draws(StudentT(1.5), 200_000, seed=1)
    assert stats.kstest(x, stats.t(1.5).cdf).pvalue > 1e-3


# ---------------------------------------------------------------- tail


def test_tail_examples():
    assert tail(SymmetricPareto(1.8), 2.0) == pytest.approx(0.287175, abs=1e-6)
    assert tail(HalfCauchyRemark(), 1.0) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("model", ANALYTIC, ids=lambda m: m.family)
def test_tail_is_monotone_and_vanishes(model):
    xs = np.geomspace(1e-3, 1e4, 40)
    t = np.asarray(model.tail(xs))
    assert np.all(np.diff(t) <= 1e-15)
    assert t[0] <= 1.0
    if model.family == "gaussian":
        # both underflow to 0.0 in double precision
        assert model.tail(1e3) == model.tail(1e4) == 0.0
    else:
        assert model.tail(1e3) > model.tail(1e4) > 0.0
    assert model.tail(1e4) < 1e-3


def test_stable_tail_against_scipy():
    m = SymmetricAlphaStable(1.5)
    assert m.tail(3.0) == pytest.approx(2 * stats.levy_stable(1.5, 0).sf(3.0), rel=1e-6)


# ---------------------------------------------------------------- quasi-norm


def test_quasinorm_pareto():
    q = weak_quasinorm(SymmetricPareto(1.8), 1.5)
    assert q.power == 1.0 and q.vanishing
    assert is_usable(SymmetricPareto(1.8), 1.5)


def test_quasinorm_pareto_boundary_not_usable():
    q = weak_quasinorm(SymmetricPareto(1.8), 1.8)
    assert q.power == 1.0
    assert not q.vanishing
    assert not is_usable(SymmetricPareto(1.8), 1.8)


def test_quasinorm_gaussian_matches_closed_form_maximisation():
    q = weak_quasinorm(GaussianControl(), 1.5)
    f = lambda x: -(x**1.5) * math.erfc(x / math.sqrt(2))
    res = optimize.minimize_scalar(f, bounds=(0.01, 10), method="bounded", options={"xatol": 1e-12})
    assert q.power == pytest.approx(-res.fun, abs=1e-6)


def test_quasinorm_diverges_above_tail_index():
    assert weak_quasinorm(StudentT(3.0), 3.5).power == math.inf
    assert weak_quasinorm(HalfCauchyRemark(), 1.0).power == pytest.approx(2 / math.pi)


@pytest.mark.parametrize("model", [GaussianControl(), StudentT(3.0), SymmetricAlphaStable(1.8)],
                         ids=lambda m: m.family)
@pytest.mark.parametrize("p", [1.1, 1.5, 1.9])
def test_quasinorm_stable_under_refinement(model, p):
    if p >= model.tail_index:
        assert weak_quasinorm(model, p).power == math.inf
        return
    a, b, c = (weak_quasinorm(model, p, points=k) for k in (400, 800, 1600))
    assert math.isfinite(a.power)
    assert abs(a.power - b.power) < 1e-6 and abs(b.power - c.power) < 1e-6


# ---------------------------------------------------------------- truncate


def test_pareto_truncation_closed_form():
    s = truncate(SymmetricPareto(1.8), 2.0)
    assert s.mu_prime == 0.0 and s.mu_double == 0.0
    assert s.M_double == pytest.approx(1.8 / 0.8 * 2**-0.8, rel=1e-14)
    assert s.M_double == pytest.approx(1.292286, abs=1e-6)


def test_half_cauchy_mu_prime():
    for psi in (0.5, 0.1, 1e-3):
        s = truncate(HalfCauchyRemark(), 1 / psi)
        assert s.mu_prime == pytest.approx(math.log(psi**-2 + 1) / math.pi, rel=1e-13)


def test_gaussian_truncation_limit():
    s = truncate(GaussianControl(), 40.0)
    assert s.mu_prime == 0.0 and s.M_double < 1e-300
    assert s.second_moment_prime == pytest.approx(1.0, rel=1e-14)


CENTRED = [SymmetricPareto(1.8), StudentT(3.0), StudentT(1.5), SymmetricAlphaStable(1.8), GaussianControl(2.0)]


@pytest.mark.parametrize("model", CENTRED, ids=lambda m: f"{m.family}")
@pytest.mark.parametrize("r", [0.5, 1.0, 10.0, 1e3])
def test_split_means_add_up(model, r):
    s = truncate(model, r)
    assert abs(s.mu_prime + s.mu_double - model.mean) <= 1e-9
    assert abs(s.mu_double) <= s.M_double


def test_truncation_moments_against_densities():
    cases = [
        (StudentT(3.0), stats.t(3).pdf),
        (StudentT(1.5), stats.t(1.5).pdf),
        (GaussianControl(1.5), stats.norm(scale=1.5).pdf),
        (SymmetricAlphaStable(1.5), stats.levy_stable(1.5, 0).pdf),
    ]
    for model, pdf in cases:
        r = 2.5
        s = truncate(model, r)
        M = 2 * integrate.quad(lambda x: x * pdf(x), r, np.inf, limit=400, epsabs=1e-12)[0]
        sec = 2 * integrate.quad(lambda x: x * x * pdf(x), 0, r, epsabs=1e-13)[0]
        assert s.M_double == pytest.approx(M, rel=1e-7, abs=1e-9)
        assert s.second_moment_prime == pytest.approx(sec, rel=1e-7, abs=1e-9)


@pytest.mark.parametrize(
    "model, pdf, lower",
    [
        (SymmetricPareto(1.8), lambda x: 1.8 * x**-2.8, 1.0),
        (StudentT(3.0), lambda x: 2 * stats.t(3).pdf(x), 0.0),
        (GaussianControl(), lambda x: 2 * stats.norm.pdf(x), 0.0),
        (HalfCauchyRemark(), lambda x: 2 / math.pi / (1 + x * x), 0.0),
    ],
    ids=["pareto", "student_t", "gaussian", "half_cauchy"],
)
@pytest.mark.parametrize("q", [1.0, 1.5, 2.0])
def test_truncated_moment_identity(model, pdf, lower, q):
    a = 4.0
    direct = integrate.quad(lambda x: x**q * pdf(x), lower, a, epsabs=1e-13, epsrel=1e-12)[0]
    assert truncated_moment(model, q, a) == pytest.approx(direct, abs=1e-8)


def test_second_moment_bound_from_quasinorm():
    for model in CENTRED:
        p = 1.5 if model.tail_index > 1.5 else 1.2
        K = weak_quasinorm(model, p).power
        for r in (0.5, 3.0, 50.0):
            assert truncate(model, r).second_moment_prime <= 2 * K * r ** (2 - p) / (2 - p) * (1 + 1e-12)


def test_truncate_rejects_bad_r():
    with pytest.raises(ValidationError):
        truncate(GaussianControl(), 0.0)


# ---------------------------------------------------------------- truncated tail bound


def test_truncated_tail_bound_pareto_decreasing():
    m = SymmetricPareto(1.8)
    b1, b10, b1000 = (truncated_tail_quasinorm_bound(m, r, 1.5) for r in (1.0, 10.0, 1e3))
    assert b1000 < b10 < b1


def test_truncated_tail_bound_gaussian_branches():
    m = GaussianControl()
    r, p = 5.0, 1.5
    M = 2 * integrate.quad(lambda x: x * stats.norm.pdf(x), r, np.inf, epsabs=1e-16, epsrel=1e-13)[0]
    a = M + r
    res = optimize.minimize_scalar(lambda u: -((a + u) ** p) * math.erfc((a + u) / math.sqrt(2)),
                                   bounds=(0, 20), method="bounded", options={"xatol": 1e-12})
    third = max(-res.fun, a**p * math.erfc(a / math.sqrt(2)))
    expected = max(M**p, a**p * math.erfc(r / math.sqrt(2)), third)
    assert truncated_tail_quasinorm_bound(m, r, p) == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("model", [SymmetricPareto(1.8), StudentT(3.0), SymmetricAlphaStable(1.8), GaussianControl()],
                         ids=lambda m: m.family)
def test_truncated_tail_bound_vanishes(model):
    vals = [truncated_tail_quasinorm_bound(model, 2.0**k, 1.5) for k in range(21)]
    assert vals[-1] < 0.3 * vals[3]
    assert all(b < a for a, b in zip(vals[3:], vals[4:])) or model.family == "gaussian"


# ---------------------------------------------------------------- three series


def test_three_series_delta_is_trivial():
    rep = three_series_check(GaussianControl(), Delta(), 1.5)
    assert rep.all_convergent
    for s in rep.series.values():
        assert len(s.checkpoints) == 1


def test_three_series_power_law_condition_i():
    rep = three_series_check(SymmetricPareto(1.8), PowerLaw(0.75), 1.5)
    assert rep.condition == "i" and rep.condition_holds
    assert rep.all_convergent
    for s in rep.series.values():
        assert s.within_bound


def remark_weights():
    return Custom(lambda j: 1.0 / ((j + 2.0) * np.log(j + 2.0) ** 2), None, "1/((j+2) log^2(j+2))")


def test_three_series_remark_second_series_diverges():
    rep = three_series_check(HalfCauchyRemark(), remark_weights(), 1.0)
    assert rep.condition == "ii"
    assert not rep.condition_holds
    assert not rep.series["second"].convergent
    assert rep.series["first"].convergent
    assert rep.series["third"].convergent


def test_three_series_remark_partial_sums_grow_like_log_log():
    rep = three_series_check(HalfCauchyRemark(), remark_weights(), 1.0)
    cps = dict(rep.series["second"].checkpoints)
    assert cps[65536] - cps[4096] > 0.05


# ---------------------------------------------------------------- symmetrize


def test_symmetrize_gaussian():
    assert symmetrize(GaussianControl(2.0)) == GaussianControl(2.0 * math.sqrt(2.0))


def test_symmetrize_pareto_is_symmetric():
    sym = symmetrize(SymmetricPareto(1.8))
    assert isinstance(sym, Symmetrized)
    x = draws(sym, seed=5)
    # quantile skewness in 100 batches, and the sign test for the median
    batches = x.reshape(100, -1)
    q1, q2, q3 = np.percentile(batches, [25, 50, 75], axis=1)
    bowley = (q3 + q1 - 2 * q2) / (q3 - q1)
    assert abs(bowley.mean()) <= 4 * bowley.std(ddof=1) / 10
    k = np.count_nonzero(x > 0)
    assert abs(k - x.size / 2) <= 4 * math.sqrt(x.size) / 2


def test_symmetrize_tail_bound_dominates():
    sym = symmetrize(StudentT(3.0))
    xs = np.array([1.0, 3.0, 10.0])
    assert np.all(np.asarray(sym.tail(xs)) <= sym.tail_bound(xs) + 3e-3)


# ---------------------------------------------------------------- construction


def test_make_model_round_trip():
    for m in (SymmetricPareto(1.8), StudentT(3.0), SymmetricAlphaStable(1.5), HalfCauchyRemark(), GaussianControl(2.0)):
        assert make_model(m.to_dict()) == m


@pytest.mark.parametrize(
    "spec, key",
    [
        ({"family": "pareto", "alpha": 0.9}, "alpha"),
        ({"family": "stable", "alpha": 2.0}, "alpha"),
        ({"family": "student_t", "nu": 1.0}, "nu"),
        ({"family": "pareto"}, "alpha"),
        ({"family": "cauchy"}, "family"),
    ],
)
def test_make_model_errors(spec, key):
    with pytest.raises(ValidationError, match=key):
        make_model(spec)


def test_empirical_model(tmp_path):
    path = tmp_path / "eps.txt"
    np.savetxt(path, np.array([1.0, 2.0, 3.0, 10.0]))
    m = load_empirical(path)
    assert m.centering_shift == pytest.approx(-4.0)
    x = sample(m, InnovationStream(0), size=1000)
    assert set(np.round(x, 12)) <= {-3.0, -2.0, -1.0, 6.0}
    assert m.tail(2.5) == pytest.approx(0.5)
    with pytest.raises(UnavailableError):
        truncate(m, 1.0)
    assert make_model({"family": "empirical", "path": str(path)}) == m
    assert m.mu_prime(100.0) == pytest.approx(0.0, abs=1e-12)


def test_empirical_model_needs_data():
    with pytest.raises(ValidationError):
        CustomEmpirical((1.0,))
