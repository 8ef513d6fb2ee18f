import math

import numpy as np
import pytest
from scipy import stats

from lpanomaly.bivariate import (
    MvsConfig,
    RegionLabel,
    attach_cutoffs,
    classify,
    detect_bivariate,
    linreg_flag,
    linreg_score,
    mvs_cutoff_density,
    mvs_flag,
    mvs_score,
    score_pair,
)
from lpanomaly.errors import DegeneratePair
from lpanomaly.pair_select import PairModel, fit_pair_model
from lpanomaly.plan_store import PlanCase

from conftest import key
from oracles import gaussian_density_2d


def pair_model(a=1.0, b=0.0, e_bar=0.0, s_e2=1.0, mu=(0.0, 0.0), V=((1.0, 0.0), (0.0, 1.0)), band=2.5, cutoffs=None):
    return PairModel(key("x"), key("y"), a, b, e_bar, s_e2, 0.9, np.array(mu, float), np.array(V, float),
                     50, band, dict(cutoffs or {}))


class TestLinreg:
    def test_on_line_is_maximum(self):
        m = pair_model(a=2.0, b=1.0, e_bar=0.3, s_e2=0.5)
        assert linreg_score(m, 4.0, 2 * 4 + 1 + 0.3) == pytest.approx(1 / math.sqrt(2 * math.pi * 0.5))

    def test_half_maximum(self):
        m = pair_model(s_e2=0.7)
        off = math.sqrt(2 * 0.7) * math.sqrt(math.log(2))
        assert linreg_score(m, 1.0, 1.0 + off) == pytest.approx(0.5 / math.sqrt(2 * math.pi * 0.7))

    def test_tighter_history_is_more_anomalous(self):
        loose, tight = pair_model(s_e2=4.0), pair_model(s_e2=0.25)
        r = 1.5
        rel = lambda m: linreg_score(m, 0.0, r) * math.sqrt(2 * math.pi * m.s_e2)  # noqa: E731
        assert rel(tight) < rel(loose)

    def test_degenerate_raises(self):
        m = pair_model(s_e2=0.0)
        m.degenerate = True
        with pytest.raises(DegeneratePair):
            linreg_score(m, 0, 0)

    def test_translation_along_line(self, rng):
        m = pair_model(a=-1.7, b=3.0, e_bar=0.1, s_e2=2.0)
        for _ in range(20):
            x, y, d = rng.normal(size=3) * 5
            assert abs(linreg_score(m, x, y) - linreg_score(m, x + d, y + m.a * d)) < 1e-10

    def test_flag_boundary(self):
        m = pair_model(a=1.0, b=0.0, band=2.0)
        assert not linreg_flag(m, 3.0, 3.0)
        assert not linreg_flag(m, 0.0, 2.0)
        assert linreg_flag(m, 0.0, 2.0 + 1e-9)

    def test_training_flag_rate(self, rng):
        x = rng.normal(size=400)
        y = 0.5 * x + rng.normal(size=400)
        m = fit_pair_model(x, y, key("x"), key("y"))
        rate = np.mean([linreg_flag(m, a, b) for a, b in zip(x, y)])
        assert rate <= 0.01 + 1 / m.n_joint


class TestMvs:
    def test_peak(self):
        V = ((2.0, 0.5), (0.5, 1.0))
        m = pair_model(mu=(1.0, 2.0), V=V)
        assert mvs_score(m, 1.0, 2.0) == pytest.approx(1 / (2 * math.pi * math.sqrt(np.linalg.det(V))))

    def test_standard_normal(self):
        assert mvs_score(pair_model(), 0, 0) == pytest.approx(0.15915494309189535)

    def test_matches_closed_form(self, rng):
        V = np.array([[1.5, -0.6], [-0.6, 0.8]])
        m = pair_model(mu=(0.5, -1.0), V=V)
        for p in rng.normal(size=(20, 2)) * 2:
            assert mvs_score(m, *p) == pytest.approx(gaussian_density_2d(p, (0.5, -1.0), V), rel=1e-12)

    def test_equal_mahalanobis_equal_score(self):
        V = np.array([[3.0, 1.0], [1.0, 2.0]])
        m = pair_model(mu=(1.0, 1.0), V=V)
        w, U = np.linalg.eigh(V)
        p1 = np.array([1.0, 1.0]) + 1.3 * np.sqrt(w[0]) * U[:, 0]
        p2 = np.array([1.0, 1.0]) - 1.3 * np.sqrt(w[1]) * U[:, 1]
        assert mvs_score(m, *p1) == pytest.approx(mvs_score(m, *p2), rel=1e-12)

    def test_decreasing_in_distance(self):
        m = pair_model(V=((2.0, 0.3), (0.3, 1.0)))
        scores = [mvs_score(m, r, r) for r in np.linspace(0, 5, 20)]
        assert all(a > b for a, b in zip(scores, scores[1:]))


class TestCutoffs:
    def test_chi_square_oracle(self):
        cfg = MvsConfig(n_samples=1500, levels=(0.01,), seed=3)
        th = mvs_cutoff_density(pair_model(), cfg)[0.01]
        expected = math.exp(-stats.chi2.ppf(0.99, 2) / 2) / (2 * math.pi)
        assert expected == pytest.approx(1.592e-3, rel=1e-3)
        # sampled density is uniform on (0, 1/2pi); quantile standard error follows
        se = math.sqrt(0.01 * 0.99 / 1500) / (2 * math.pi)
        assert abs(th - expected) < 3 * se

    def test_level_one_is_max_sample(self):
        V = ((2.0, 0.2), (0.2, 0.5))
        m = pair_model(V=V)
        cfg = MvsConfig(levels=(0.5,), seed=1)
        rng = np.random.default_rng(9)
        top = mvs_cutoff_density(m, MvsConfig(levels=(0.999999,), seed=1), rng)
        assert top[0.999999] <= 1 / (2 * math.pi * math.sqrt(np.linalg.det(V)))
        assert mvs_cutoff_density(m, cfg) == mvs_cutoff_density(m, cfg)

    def test_same_seed_same_thresholds(self):
        cfg = MvsConfig(seed=42)
        assert mvs_cutoff_density(pair_model(), cfg) == mvs_cutoff_density(pair_model(), cfg)

    def test_flags(self, rng):
        m = attach_cutoffs(pair_model(V=((1.0, 0.4), (0.4, 1.0))), MvsConfig(seed=5))
        assert not mvs_flag(m, 0.0, 0.0, 0.01) and not mvs_flag(m, 0.0, 0.0, 0.05)
        w, U = np.linalg.eigh(m.V)
        far = 10 * np.sqrt(w[0]) * U[:, 0]
        assert mvs_flag(m, *far, 0.01)
        draws = rng.multivariate_normal(m.mu, m.V, 20000)
        rate = np.mean([mvs_flag(m, *p, 0.01) for p in draws])
        # binomial error of the 1500-draw threshold dominates
        assert abs(rate - 0.01) < 3 * math.sqrt(0.01 * 0.99 / 1500) + 3 * math.sqrt(0.01 * 0.99 / 20000)

    def test_singular_covariance_regularized(self):
        x = np.arange(10.0)
        m = attach_cutoffs(fit_pair_model(x, 3 * x, key("x"), key("y")), MvsConfig())
        assert not m.degenerate_mvs and set(m.mvs_density_cutoffs) == {0.01, 0.05}


class TestClassify:
    @pytest.mark.parametrize("lf,mf,label", [
        (True, True, RegionLabel.Significant),
        (True, False, RegionLabel.Disproportionate),
        (False, True, RegionLabel.SuezType),
        (False, False, RegionLabel.NonAnomalous),
    ])
    def test_truth_table(self, lf, mf, label):
        assert classify(lf, mf) is label


class TestDetect:
    def fitted(self, x, y, seed=0):
        return attach_cutoffs(fit_pair_model(x, y, key("A"), key("B")), MvsConfig(seed=seed))

    def test_replay_inside_regions(self, rng):
        x = rng.uniform(10, 20, 300)
        y = 2 * x + rng.normal(0, 1, 300)
        m = self.fitted(x, y)
        case = PlanCase("c", "", {key("A"): float(np.mean(x)), key("B"): float(2 * np.mean(x))})
        assert detect_bivariate([m], case) == []

    def test_blend_ratio_shift_is_significant(self, rng):
        A = rng.uniform(0.01, 0.05, 200)
        B = 1.5133 * A + rng.normal(0, 0.02 * np.ptp(1.5133 * A), 200)
        assert B.max() < 0.08
        m = self.fitted(A, B)
        (f,) = detect_bivariate([m], PlanCase("t", "", {key("A"): 0.31, key("B"): 0.8787 * 0.31}))
        assert f.label is RegionLabel.Significant

    def test_missing_member_skipped(self, rng):
        x = rng.normal(size=50)
        m = self.fitted(x, x + rng.normal(size=50))
        assert detect_bivariate([m], PlanCase("t", "", {key("A"): 100.0})) == []

    def test_sorted_worst_first(self, rng):
        x = rng.normal(size=100)
        m1 = self.fitted(x, x + 0.1 * rng.normal(size=100))
        m2 = PairModel(**{**m1.__dict__, "y_var": key("C")})
        case = PlanCase("t", "", {key("A"): 0.0, key("B"): 3.0, key("C"): 6.0})
        fs = detect_bivariate([m1, m2], case)
        assert [f.y_var for f in fs] == [key("C"), key("B")]
        assert fs[0].mvs_score <= fs[1].mvs_score

    def test_degenerate_pair_reports_maximal_anomaly(self):
        x = np.arange(20.0)
        m = self.fitted(x, 2 * x + 1)
        assert m.degenerate
        on = score_pair(m, 5.0, 11.0)
        off = score_pair(m, 5.0, 11.5)
        assert not on.linreg_flag and off.linreg_flag and off.linreg_score == 0.0

    def test_seeded_reproducible(self, rng):
        x = rng.normal(size=60)
        y = x + rng.normal(size=60)
        case = PlanCase("t", "", {key("A"): 2.5, key("B"): -2.5})
        assert detect_bivariate([self.fitted(x, y, 7)], case) == detect_bivariate([self.fitted(x, y, 7)], case)
