import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wbcinterp.evaluation import (
    ConfusionMatrix,
    EvaluationReport,
    accuracy_with_ci,
    category_vi,
    clopper_pearson,
    f1_score,
    relative_feature_vi,
)
from wbcinterp.features import FEATURE_NAMES

# Reference MDA columns for the two source datasets, keyed by feature name (">0.000" entries taken as 0).
REFERENCE_MDA = {
    "White EI": (0.039, 0.083), "Black EI": (0.004, 0.035), "SP value": (0.005, 0.011),
    "Mean R": (0.007, 0.022), "SD R": (0.012, 0.007), "Mean G": (0.033, 0.021),
    "SD G": (0.018, 0.013), "Mean B": (0.018, 0.036), "SD B": (0.056, 0.014),
    "Mean C": (0.017, 0.009), "SD C": (0.006, 0.005), "Mean M": (0.085, 0.015),
    "SD M": (0.021, 0.021), "Mean Y": (0.0, 0.0), "SD Y": (0.0, 0.0),
    "Mean K": (0.019, 0.034), "SD K": (0.067, 0.015), "Mean P": (0.010, 0.021),
    "SD P": (0.008, 0.020), "Circularity": (0.018, 0.013), "Eccentricity": (0.002, 0.005),
    "1st Eigenvalue": (0.012, 0.051), "2nd Eigenvalue": (0.046, 0.055),
    "Number of Corners": (0.009, 0.017),
}
ALLIDB2_MDA = np.array([REFERENCE_MDA[f][0] for f in FEATURE_NAMES])
CNMC_MDA = np.array([REFERENCE_MDA[f][1] for f in FEATURE_NAMES])


def binom_tail_ge(x, n, p):
    return sum(math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(x, n + 1))


def bisect(f, target, lo=0.0, hi=1.0):
    # f increasing in p
    for _ in range(200):
        mid = (lo + hi) / 2
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def exact_interval(x, n, level=0.95):
    a = (1 - level) / 2
    lower = 0.0 if x == 0 else bisect(lambda p: binom_tail_ge(x, n, p), a)
    upper = 1.0 if x == n else bisect(lambda p: binom_tail_ge(x + 1, n, p), 1 - a)
    return lower, upper


class TestInterval:
    @pytest.mark.parametrize("n, lower", [(52, 0.9315), (208, 0.9824)])
    def test_reference_perfect_scores(self, n, lower):
        acc, lo, hi = accuracy_with_ci(ConfusionMatrix(n // 2, 0, 0, n - n // 2))
        assert acc == 1.0 and hi == 1.0
        assert lo == pytest.approx(lower, abs=1e-4)
        assert lo == pytest.approx(0.025 ** (1 / n), abs=1e-12)

    @pytest.mark.parametrize("x, n", [(0, 5), (1, 5), (3, 10), (17, 20), (40, 41), (7, 60)])
    def test_matches_binomial_sums(self, x, n):
        assert clopper_pearson(x, n) == pytest.approx(exact_interval(x, n), abs=1e-9)

    def test_bad_input(self):
        with pytest.raises(ValueError):
            clopper_pearson(3, 0)
        with pytest.raises(ValueError):
            clopper_pearson(5, 4)

    @given(st.integers(1, 300), st.floats(0, 1))
    def test_contains_estimate(self, n, f):
        x = round(f * n)
        lo, hi = clopper_pearson(x, n)
        assert 0 <= lo <= x / n <= hi <= 1

    @given(st.integers(1, 200))
    def test_narrows_with_n(self, n):
        lo1, hi1 = clopper_pearson(n, 2 * n)
        lo2, hi2 = clopper_pearson(2 * n, 4 * n)
        assert hi2 - lo2 < hi1 - lo1


class TestConfusion:
    def test_reference_validation_table(self):
        cm = ConfusionMatrix(tn=522, fp=133, fn=156, tp=1322)
        acc, lo, hi = accuracy_with_ci(cm)
        assert acc == pytest.approx(0.8645, abs=1e-4)
        assert lo == pytest.approx(0.8493, abs=1e-3) and hi == pytest.approx(0.8788, abs=1e-3)
        assert f1_score(cm) == pytest.approx(0.901, abs=1e-3)

    def test_from_labels(self):
        cm = ConfusionMatrix.from_labels([0, 0, 1, 1, 1], [0, 1, 0, 1, 1])
        assert (cm.tn, cm.fp, cm.fn, cm.tp) == (1, 1, 1, 2)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            ConfusionMatrix(-1, 0, 0, 0)

    def test_f1_undefined(self):
        with pytest.raises(ValueError):
            f1_score(ConfusionMatrix(5, 0, 3, 0))

    @given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500), st.integers(1, 500), st.integers(1, 5))
    def test_f1_properties(self, tn, fp, fn, tp, k):
        cm = ConfusionMatrix(tn, fp, fn, tp)
        p, r = tp / (tp + fp), tp / (tp + fn)
        assert f1_score(cm) == pytest.approx(2 * p * r / (p + r))
        assert f1_score(cm) == f1_score(ConfusionMatrix(0, fp, fn, tp))
        assert f1_score(ConfusionMatrix(k * tn, k * fp, k * fn, k * tp)) == pytest.approx(f1_score(cm))

    def test_table_layout(self):
        lines = ConfusionMatrix(1, 2, 3, 4).table().splitlines()
        assert lines[1].split()[-2:] == ["1", "3"]
        assert lines[2].split()[-2:] == ["2", "4"]


class TestImportance:
    def test_cnmc_feature_relatives(self):
        rel = relative_feature_vi(CNMC_MDA)
        idx = {f: i for i, f in enumerate(FEATURE_NAMES)}
        assert rel[idx["White EI"]] == pytest.approx(1.000, abs=0.01)
        assert rel[idx["2nd Eigenvalue"]] == pytest.approx(0.664, abs=0.01)
        assert rel[idx["1st Eigenvalue"]] == pytest.approx(0.614, abs=0.01)

    def test_cnmc_categories(self):
        cat = category_vi(CNMC_MDA)
        assert cat["Shape"] == 1.0
        assert cat["Color"] == pytest.approx(0.776, abs=0.02)
        assert cat["Texture"] == pytest.approx(0.152, abs=0.01)

    def test_allidb2_tables(self):
        rel = relative_feature_vi(ALLIDB2_MDA)
        assert rel[FEATURE_NAMES.index("Mean M")] == 1.0
        assert rel[FEATURE_NAMES.index("SD K")] == pytest.approx(0.791, abs=0.01)
        cat = category_vi(ALLIDB2_MDA)
        assert cat["Color"] == 1.0
        assert cat["Texture"] == pytest.approx(0.052, abs=0.01)
        # summing the rounded table entries gives 0.376 against a reference 0.357
        assert cat["Shape"] == pytest.approx(0.357, abs=0.02)

    def test_negative_clamped(self):
        rel = relative_feature_vi([-0.2, 0.1, 0.4])
        assert rel.tolist() == [0.0, 0.25, 1.0]

    def test_all_nonpositive(self):
        with pytest.raises(ValueError):
            relative_feature_vi([-1.0, 0.0])

    @given(st.lists(st.floats(0, 1), min_size=24, max_size=24).filter(lambda v: max(v) > 0), st.floats(0.01, 100))
    def test_scale_invariant(self, v, s):
        a = category_vi(v)
        b = category_vi([x * s for x in v])
        assert a == pytest.approx(b)
        assert max(a.values()) == 1.0


class TestReport:
    def test_round_trip(self, tmp_path):
        rep = EvaluationReport.build(ConfusionMatrix(522, 133, 156, 1322), CNMC_MDA)
        paths = rep.write(tmp_path)
        assert {p.name for p in paths.values()} == {"metrics.csv", "importance.csv", "categories.csv", "report.txt"}
        back = EvaluationReport.read(tmp_path)
        assert back == rep
        assert "0.8645" in paths["report"].read_text()

    def test_undefined_f1_round_trip(self, tmp_path):
        rep = EvaluationReport.build(ConfusionMatrix(10, 0, 2, 0))
        rep.write(tmp_path)
        back = EvaluationReport.read(tmp_path)
        assert back.f1 is None and back.confusion == rep.confusion
