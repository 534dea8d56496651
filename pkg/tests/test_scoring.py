import itertools
import math

import numpy as np
import pytest

from camrad import (
    ConfigError,
    DEFAULT_CLASS_META,
    PointDet,
    RadarPoint,
    ScoringConfig,
    match_frame,
    ols,
    score,
)

from _corpus import make_corpus
from reference_scoring import score_reference

META = DEFAULT_CLASS_META
KAPPA = {c: m.kappa for c, m in META.items()}


def det(frame, cid, r, theta=0.0, conf=1.0):
    return PointDet(frame, cid, RadarPoint(r, theta), conf)


def brute_best_total(dets, gts, threshold):
    """Maximum total kernel value over all one-to-one matchings."""
    best = 0.0
    gi_indices = range(len(gts))
    for k in range(0, min(len(dets), len(gts)) + 1):
        for det_sub in itertools.combinations(range(len(dets)), k):
            for gt_perm in itertools.permutations(gi_indices, k):
                total = 0.0
                ok = True
                for di, gi in zip(det_sub, gt_perm):
                    v = ols(dets[di], gts[gi], META)
                    if v < threshold or v <= 0.0:
                        ok = False
                        break
                    total += v
                if ok:
                    best = max(best, total)
    return best


class TestKernel:
    def test_zero_distance_is_exactly_one(self):
        a = det(0, "car", 10.0, 0.2)
        b = det(0, "car", 10.0, 0.2)
        assert ols(a, b, META) == 1.0

    def test_unit_scale_distance(self):
        # d equal to s*kappa gives exp(-1/2).
        s, kappa = 10.0, META["car"].kappa
        a = det(0, "car", s + s * kappa)
        b = det(0, "car", s)
        assert ols(a, b, META) == pytest.approx(math.exp(-0.5), abs=1e-12)

    def test_cross_class_is_exactly_zero(self):
        a = det(0, "car", 10.0)
        b = det(0, "pedestrian", 10.0)
        assert ols(a, b, META) == 0.0

    def test_strictly_decreasing_in_distance(self):
        gt = det(0, "cyclist", 12.0)
        values = [ols(det(0, "cyclist", 12.0 + d), gt, META)
                  for d in np.linspace(0.0, 4.0, 50)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_scale_grows_with_range_and_class(self):
        near = ols(det(0, "car", 5.5), det(0, "car", 5.0), META)
        far = ols(det(0, "car", 20.5), det(0, "car", 20.0), META)
        assert far > near
        tight = ols(det(0, "pedestrian", 10.5), det(0, "pedestrian", 10.0), META)
        loose = ols(det(0, "car", 10.5), det(0, "car", 10.0), META)
        assert loose > tight


class TestMatching:
    def test_claims_highest_kernel(self):
        d = [det(0, "car", 10.0)]
        g = [det(0, "car", 10.3), det(0, "car", 11.5)]
        m = match_frame(d, g, 0.5, META)
        assert m.pairs == ((0, 0, pytest.approx(ols(d[0], g[0], META))),)
        assert m.unmatched_gts == (1,)

    def test_confidence_priority(self):
        # The confident detection picks first even though it is farther.
        g = [det(0, "car", 10.0)]
        d = [det(0, "car", 10.4, conf=0.6), det(0, "car", 10.2, conf=0.9)]
        m = match_frame(d, g, 0.5, META)
        assert [p[0] for p in m.pairs] == [1]
        assert m.unmatched_dets == (0,)

    def test_equal_confidence_lower_range_first(self):
        g = [det(0, "car", 10.0)]
        d = [det(0, "car", 10.4, conf=0.8), det(0, "car", 10.2, conf=0.8)]
        m = match_frame(d, g, 0.5, META)
        assert [p[0] for p in m.pairs] == [1]

    def test_threshold_excludes_weak_pairs(self):
        d = [det(0, "pedestrian", 12.0)]
        g = [det(0, "pedestrian", 10.0)]
        assert ols(d[0], g[0], META) < 0.5
        m = match_frame(d, g, 0.5, META)
        assert m.pairs == ()
        assert m.unmatched_dets == (0,) and m.unmatched_gts == (0,)

    def test_cross_class_never_matches(self):
        d = [det(0, "car", 10.0)]
        g = [det(0, "cyclist", 10.0)]
        assert match_frame(d, g, 0.5, META).pairs == ()

    def test_one_gt_per_detection(self):
        d = [det(0, "car", 10.0, conf=0.9), det(0, "car", 10.05, conf=0.8)]
        g = [det(0, "car", 10.02)]
        m = match_frame(d, g, 0.5, META)
        assert len(m.pairs) == 1 and m.pairs[0][0] == 0

    @pytest.mark.parametrize("seed", range(25))
    def test_never_beats_brute_force(self, seed):
        rng = np.random.default_rng(400 + seed)
        dets, gts = make_corpus(rng, 1, classes=("car",), max_fa=2)
        dets, gts = dets[:5], gts[:5]
        m = match_frame(dets, gts, 0.5, META)
        greedy_total = sum(p[2] for p in m.pairs)
        assert greedy_total <= brute_best_total(dets, gts, 0.5) + 1e-12

    def test_adversarial_greedy_deviation(self):
        """Greedy is order-committed: the confident detection takes the
        shared truth and the optimal swap is lost.  This pins the
        documented behavior rather than silently relying on it."""
        def at_xy(x, z, conf=1.0):
            return det(0, "car", math.hypot(x, z), math.atan2(x, z), conf)

        # d(a, g1) targets kernel ~0.8, d(a, g2) ~0.75; b sits exactly on
        # g1 but beyond threshold range of g2.
        d1 = 0.7 * math.sqrt(2.0 * math.log(1.0 / 0.8))
        d2 = 0.7 * math.sqrt(2.0 * math.log(1.0 / 0.75))
        g1 = at_xy(0.0, 10.0)
        g2 = at_xy(d1 + d2, 10.0)
        a = at_xy(d1, 10.0, conf=0.9)
        b = at_xy(0.0, 10.0, conf=0.5)
        assert ols(a, g1, META) > ols(a, g2, META) > 0.5
        assert ols(b, g1, META) == 1.0
        assert ols(b, g2, META) < 0.5

        m = match_frame([a, b], [g1, g2], 0.5, META)
        greedy_total = sum(p[2] for p in m.pairs)
        assert [(p[0], p[1]) for p in m.pairs] == [(0, 0)]
        assert greedy_total < brute_best_total([a, b], [g1, g2], 0.5) - 0.5


class TestDqf1:
    def test_hand_value_two_thirds(self):
        d = [det(0, "car", 10.0)]
        g = [det(0, "car", 10.0), det(0, "car", 20.0)]
        rep = score(d, g, META)
        assert rep.overall.dqf1 == pytest.approx(2.0 / 3.0, abs=1e-15)

    def test_equals_f1_for_perfect_localization(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n_match = int(rng.integers(0, 5))
            n_fp = int(rng.integers(0, 4))
            n_fn = int(rng.integers(0, 4))
            if n_match + n_fn == 0 or n_match + n_fp == 0:
                continue
            gts, dets = [], []
            for i in range(n_match):
                p = RadarPoint(float(rng.uniform(3, 20)), float(rng.uniform(-1, 1)))
                gts.append(PointDet(0, "car", p))
                dets.append(PointDet(0, "car", p, float(rng.uniform(0.5, 1.0))))
            for i in range(n_fn):
                gts.append(PointDet(0, "car", RadarPoint(50.0 + 5 * i, 1.2)))
            for i in range(n_fp):
                dets.append(PointDet(0, "car", RadarPoint(80.0 + 5 * i, -1.2),
                                     0.4))
            rep = score(dets, gts, META)
            n_det, n_gt = len(dets), len(gts)
            f1 = 2.0 * n_match / (n_det + n_gt)
            assert rep.overall.dqf1 == pytest.approx(f1, abs=1e-12)

    def test_never_exceeds_f1(self):
        rng = np.random.default_rng(3)
        for seed in range(50):
            dets, gts = make_corpus(np.random.default_rng(seed), 2)
            rep = score(dets, gts, META)
            matched = round(rep.overall.precision * rep.overall.n_det)
            if rep.overall.n_det + rep.overall.n_gt == 0:
                continue
            f1 = 2.0 * matched / (rep.overall.n_det + rep.overall.n_gt)
            assert rep.overall.dqf1 <= f1 + 1e-12

    def test_empty_conventions(self):
        rep = score([], [], META)
        assert (rep.overall.precision, rep.overall.recall, rep.overall.dqf1) == \
            (1.0, 1.0, 1.0)
        assert rep.overall.mae_mean is None and rep.overall.mae_std is None

        rep = score([det(0, "car", 10.0)], [], META)
        assert (rep.overall.precision, rep.overall.recall, rep.overall.dqf1) == \
            (0.0, 0.0, 0.0)

        rep = score([], [det(0, "car", 10.0)], META)
        assert (rep.overall.precision, rep.overall.recall, rep.overall.dqf1) == \
            (0.0, 0.0, 0.0)


class TestReportShape:
    def test_mae_pooled_over_matches(self):
        g = [det(0, "car", 10.0), det(0, "car", 15.0)]
        d = [det(0, "car", 10.1), det(0, "car", 15.3)]
        rep = score(d, g, META)
        assert rep.overall.mae_mean == pytest.approx(0.2, abs=1e-9)
        assert rep.overall.mae_std == pytest.approx(0.1, abs=1e-9)

    def test_sweep_steps_down_at_kernel_value(self):
        g = [det(0, "car", 10.0)]
        d = [det(0, "car", 10.5)]
        v = ols(d[0], g[0], META)
        assert 0.5 < v < 0.9
        rep = score(d, g, META)
        for t, p, r in rep.sweep:
            expected = 1.0 if v >= t else 0.0
            assert p == expected and r == expected
        want_ap = sum(1.0 if v >= t else 0.0
                      for t, _, _ in rep.sweep) / len(rep.sweep)
        assert rep.overall.ap == pytest.approx(want_ap, abs=1e-12)
        assert rep.overall.ar == pytest.approx(want_ap, abs=1e-12)

    def test_per_class_and_macro(self):
        d = [det(0, "car", 10.0), det(0, "pedestrian", 8.0),
             det(1, "car", 12.0)]
        g = [det(0, "car", 10.0), det(0, "pedestrian", 8.0),
             det(1, "car", 12.0), det(1, "cyclist", 9.0)]
        rep = score(d, g, META)
        assert set(rep.per_class) == {"car", "pedestrian", "cyclist"}
        assert rep.per_class["car"].n_det == 2
        assert rep.per_class["cyclist"].precision == 0.0
        macro_p = np.mean([rep.per_class[c].precision for c in rep.per_class])
        assert rep.macro.precision == pytest.approx(float(macro_p), abs=1e-12)

    def test_scenario_rows(self):
        d = [det(0, "car", 10.0), det(5, "car", 12.0)]
        g = [det(0, "car", 10.0), det(5, "car", 12.0)]
        rep = score(d, g, META, scenarios={"early": (0, 2), "late": (3, 9)})
        assert rep.per_scenario["early"].n_det == 1
        assert rep.per_scenario["late"].n_gt == 1

    def test_unknown_class_rejected(self):
        with pytest.raises(ConfigError, match="unicycle"):
            score([det(0, "unicycle", 10.0)], [], META)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            ScoringConfig(primary_threshold=0.0)
        with pytest.raises(ConfigError):
            ScoringConfig(sweep_start=0.9, sweep_stop=0.5)
        with pytest.raises(ConfigError):
            ScoringConfig(sweep_step=0.0)
        assert ScoringConfig().thresholds() == \
            pytest.approx([0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9])

    def test_confidence_validation(self):
        with pytest.raises(ValueError):
            det(0, "car", 10.0, conf=1.2)


class TestAgainstReference:
    @pytest.mark.parametrize("seed", range(8))
    def test_full_report_matches(self, seed):
        rng = np.random.default_rng(800 + seed)
        dets, gts = make_corpus(rng, 6)
        scenarios = {"head": (0, 2), "tail": (3, 5)}
        rep = score(dets, gts, META, scenarios=scenarios)
        ref = score_reference(dets, gts, KAPPA, scenarios=scenarios)

        def compare(ms, row):
            assert ms.n_det == row["n_det"] and ms.n_gt == row["n_gt"]
            for k in ("precision", "recall", "ap", "ar", "dqf1"):
                assert getattr(ms, k) == pytest.approx(row[k], abs=1e-9), k
            for k in ("mae_mean", "mae_std"):
                a, b = getattr(ms, k), row[k]
                assert (a is None) == (b is None)
                if a is not None:
                    assert a == pytest.approx(b, abs=1e-9), k

        compare(rep.overall, ref["overall"])
        assert set(rep.per_class) == set(ref["per_class"])
        for c in rep.per_class:
            compare(rep.per_class[c], ref["per_class"][c])
        compare(rep.macro, ref["macro"])
        for name in scenarios:
            compare(rep.per_scenario[name], ref["per_scenario"][name])
        for (t1, p1, r1), (t2, p2, r2) in zip(rep.sweep, ref["overall"]["sweep"]):
            assert t1 == t2
            assert p1 == pytest.approx(p2, abs=1e-12)
            assert r1 == pytest.approx(r2, abs=1e-12)
