import math

import numpy as np
import pytest
from scipy import stats

from icrt_lab import (
    FieldRealization,
    FieldSpec,
    GeneralizedField,
    StopRule,
    ThetaSpec,
    gff_distance,
    register_field_spec,
    sample_icrt,
    sample_loop_point,
    uniform_tail,
)
from icrt_lab.fields import FieldError, atom_probe_points, export_field_trace
from icrt_lab.plane import path_atom_angles
from icrt_lab.util import keyed_generator


class TestTreeField:
    def test_root_is_zero(self, hand_sample):
        r = FieldRealization(hand_sample, 0)
        assert r.tree_value(0.0) == 0.0

    def test_single_branch_variance(self):
        s = sample_icrt(ThetaSpec.brownian(), 1, StopRule(max_level=2.0))
        n = 10_000
        vals = np.asarray([FieldRealization(s, k).tree_value(0.8) for k in range(n)])
        var = float(np.var(vals, ddof=1))
        se = 0.8 * math.sqrt(2.0 / n)
        assert abs(var - 0.8) <= 4 * se

    def test_increment_variance_is_tree_distance(self, hand_sample):
        s = hand_sample
        target = s.skeleton.tree_distance(0.8, 2.5)
        n = 6000
        diffs = np.empty(n)
        for k in range(n):
            g = FieldRealization(s, k).tree_values([0.8, 2.5])
            diffs[k] = g[0] - g[1]
        var = float(np.var(diffs, ddof=1))
        assert abs(var - target) <= 4 * target * math.sqrt(2.0 / n)

    def test_lazy_refinement_keeps_values(self, hand_sample):
        r = FieldRealization(hand_sample, 3)
        v1 = r.tree_value(1.7)
        r.tree_values([1.2, 1.9, 0.3, 2.8])
        assert r.tree_value(1.7) == v1

    def test_batch_order_invariance(self, hand_sample):
        pts = [2.7, 0.4, 1.6, 1.1, 2.2, 0.9]
        r1 = FieldRealization(hand_sample, 4)
        a = r1.tree_values(pts)
        r2 = FieldRealization(hand_sample, 4)
        b = r2.tree_values(pts[::-1])[::-1]
        assert np.array_equal(a, b)

    def test_out_of_range_query(self, hand_sample):
        with pytest.raises(ValueError):
            FieldRealization(hand_sample, 0).tree_value(9.0)


class TestBridges:
    def test_pinned_ends(self, hand_sample):
        r = FieldRealization(hand_sample, 5)
        assert r.bridge_value(0, 0.0) == 0.0
        assert r.bridge_value(0, 1.0) == 0.0

    def test_midpoint_variance(self, hand_sample):
        n = 10_000
        vals = np.asarray(
            [FieldRealization(hand_sample, k).bridge_value(0, 0.5) for k in range(n)]
        )
        assert abs(float(np.var(vals, ddof=1)) - 0.25) <= 4 * 0.25 * math.sqrt(2 / n)

    def test_increment_variance(self, hand_sample):
        n = 10_000
        diffs = np.empty(n)
        for k in range(n):
            v = FieldRealization(hand_sample, k).bridge_values(1, [0.2, 0.9])
            diffs[k] = v[0] - v[1]
        target = 0.7 * (1 - 0.7)
        assert abs(float(np.var(diffs, ddof=1)) - target) <= 4 * target * math.sqrt(
            2 / n
        )

    def test_angle_range(self, hand_sample):
        with pytest.raises(FieldError):
            FieldRealization(hand_sample, 0).bridge_value(0, 1.5)


class TestFennec:
    def test_root_zero(self, hand_sample):
        assert FieldRealization(hand_sample, 6).fennec_value((0.0, 0.0)) == 0.0

    def test_cycle_equals_bridge(self, cycle_sample):
        s = cycle_sample
        x1 = float(s.measure.xs[0])
        r = FieldRealization(s, 7)
        got = r.fennec_value((x1, 0.3))
        assert got == r.bridge_value(0, 0.3)

    def test_decomposition(self, hand_sample):
        s = hand_sample
        r = FieldRealization(s, 8)
        alpha = (2.5, 0.4)
        val = r.fennec_value(alpha)
        tree = math.sqrt(0.55) / math.sqrt(6) * r.tree_value(2.5)
        atoms = sum(
            math.sqrt(s.measure.ws[i]) * r.bridge_value(i, u)
            for i, u in path_atom_angles(s, alpha)
        )
        assert val == pytest.approx(tree + atoms, abs=1e-12)

    def test_variance_identity(self, powerlaw_sample):
        s = powerlaw_sample
        rng = np.random.default_rng(9)
        pairs = [
            (sample_loop_point(s, s.level, rng), sample_loop_point(s, s.level, rng))
            for _ in range(3)
        ]
        n = 4000
        diffs = np.empty((n, 3))
        pts = [p for ab in pairs for p in ab]
        for k in range(n):
            v = FieldRealization(s, 1000 + k).fennec_values(pts)
            diffs[k] = v[0::2] - v[1::2]
        for j, (a, b) in enumerate(pairs):
            target = gff_distance(s, a, b)
            var = float(np.var(diffs[:, j], ddof=1))
            assert abs(var - target) <= 4 * target * math.sqrt(2 / n)

    def test_gaussianity(self, powerlaw_sample):
        s = powerlaw_sample
        rng = np.random.default_rng(10)
        a = sample_loop_point(s, s.level, rng)
        b = sample_loop_point(s, s.level, rng)
        n = 5000
        diffs = np.empty(n)
        for k in range(n):
            v = FieldRealization(s, 9000 + k).fennec_values([a, b])
            diffs[k] = v[0] - v[1]
        assert stats.shapiro(diffs).pvalue > 0.01

    def test_reproducibility(self, powerlaw_sample):
        s = powerlaw_sample
        rng = np.random.default_rng(11)
        pts = [sample_loop_point(s, s.level, rng) for _ in range(8)]
        v1 = FieldRealization(s, 12).fennec_values(pts)
        v2 = FieldRealization(s, 12).fennec_values(list(reversed(pts)))[::-1]
        assert np.array_equal(v1, v2)

    def test_trace_export(self, hand_sample, tmp_path):
        r = FieldRealization(hand_sample, 13)
        path = tmp_path / "trace.csv"
        export_field_trace(path, hand_sample, r, [(0.0, 0.0), (0.8, 0.2)])
        lines = path.read_text().splitlines()
        assert lines[0] == "id,position,angle,gfield,fennec"
        assert len(lines) == 3


class TestGeneralized:
    def test_bridge_spec_validates(self):
        spec = register_field_spec(
            FieldSpec(kind="bridge", kappa=4.0), keyed_generator(1, 1), n_audit=2000
        )
        assert spec.validated

    def test_zero_field_validates_and_sums_to_zero(self, powerlaw_sample):
        spec = register_field_spec(
            FieldSpec(kind="custom", kappa=4.0, factory=lambda rng: np.zeros_like),
            keyed_generator(2, 2),
            n_audit=500,
        )
        gf = GeneralizedField(powerlaw_sample, spec, 3)
        rng = np.random.default_rng(0)
        a = sample_loop_point(powerlaw_sample, powerlaw_sample.level, rng)
        assert gf.partial_sum(a, 1, 60) == 0.0

    def test_uncentered_rejected(self):
        def factory(rng):
            return lambda u: np.where(np.asarray(u) > 0, 1.0, 0.0)

        with pytest.raises(FieldError, match="centered"):
            register_field_spec(
                FieldSpec(kind="custom", kappa=4.0, factory=factory),
                keyed_generator(3, 3),
                n_audit=500,
            )

    def test_heavy_tail_rejected(self):
        def factory(rng):
            c = rng.standard_normal() * 3.0
            return lambda u: c * np.asarray(u)

        with pytest.raises(FieldError, match="sup-moment"):
            register_field_spec(
                FieldSpec(kind="custom", kappa=4.0, factory=factory),
                keyed_generator(4, 4),
                n_audit=2000,
            )

    def test_unregistered_rejected(self, powerlaw_sample):
        with pytest.raises(FieldError, match="register"):
            GeneralizedField(powerlaw_sample, FieldSpec(), 0)

    def test_partial_sum_matches_terms(self, powerlaw_sample):
        s = powerlaw_sample
        spec = register_field_spec(
            FieldSpec(kind="bridge", kappa=4.0), keyed_generator(5, 5), n_audit=500
        )
        gf = GeneralizedField(s, spec, 6)
        rng = np.random.default_rng(1)
        a = sample_loop_point(s, s.level, rng)
        manual = sum(
            math.sqrt(s.measure.ws[i]) * gf.d_value(i, u)
            for i, u in path_atom_angles(s, a)
            if 1 <= i + 1 <= 60
        )
        assert gf.partial_sum(a, 1, 60) == pytest.approx(manual, abs=1e-12)
        assert gf.partial_sum(a, 100, 200) == 0.0

    def test_partial_sum_variance_matches_bridge_part(self, powerlaw_sample):
        s = powerlaw_sample
        spec = register_field_spec(
            FieldSpec(kind="bridge", kappa=4.0), keyed_generator(6, 6), n_audit=500
        )
        rng = np.random.default_rng(2)
        a = sample_loop_point(s, s.level, rng)
        target = sum(
            s.measure.ws[i] * u * (1 - u) for i, u in path_atom_angles(s, a)
        )
        n = 4000
        vals = np.asarray(
            [
                GeneralizedField(s, spec, 100 + k).partial_sum(a, 1, 60)
                for k in range(n)
            ]
        )
        var = float(np.var(vals, ddof=1))
        assert abs(var - target) <= 4 * max(target, 1e-6) * math.sqrt(2 / n)

    def test_uniform_tail(self, powerlaw_sample):
        s = powerlaw_sample
        spec = register_field_spec(
            FieldSpec(kind="bridge", kappa=4.0), keyed_generator(7, 7), n_audit=500
        )
        gf = GeneralizedField(s, spec, 8)
        probes = atom_probe_points(s, 8)
        tails = [uniform_tail(gf, n, probes) for n in (1, 10, 20, 40, 1000)]
        assert all(tails[i] >= tails[i + 1] - 1e-12 for i in range(len(tails) - 1))
        assert tails[-1] == 0.0

    def test_tail_median_decreases(self):
        spec_t = ThetaSpec.power_law(1.5, 60)
        fspec = register_field_spec(
            FieldSpec(kind="bridge", kappa=4.0), keyed_generator(8, 8), n_audit=500
        )
        levels = (1, 8, 30)
        tails = {n: [] for n in levels}
        for seed in range(60):
            s = sample_icrt(spec_t, 500 + seed, StopRule(max_branches=6))
            gf = GeneralizedField(s, fspec, seed)
            probes = atom_probe_points(s, 4)
            if not probes:
                continue
            for n in levels:
                tails[n].append(uniform_tail(gf, n, probes))
        med = [float(np.median(tails[n])) for n in levels]
        assert med[0] >= med[1] >= med[2]
