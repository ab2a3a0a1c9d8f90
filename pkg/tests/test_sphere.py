"""Orthant coordinates, box mixtures, the optimal-rule oracle, dataset files."""

import math

import numpy as np
import pytest

from ntk_kit import (
    HALF_PI,
    AngularBox,
    LabeledDataset,
    MalformedDataset,
    MixtureSpec,
    SpecInvalid,
    angles_to_point,
    bayes_oracle,
    load_dataset,
    point_to_angles,
    sample_mixture,
    sample_uniform,
    save_dataset,
    stream,
)


def design_spec(prior=0.5):
    """The overlapping-box mixture used throughout: moderate overlap, d=2."""
    lo, hi = 0.25 * HALF_PI, 0.8 * HALF_PI
    return MixtureSpec(
        dim=2,
        prior_pos=prior,
        box_pos=AngularBox((0.0, 0.0), (hi, hi)),
        box_neg=AngularBox((lo, lo), (HALF_PI, HALF_PI)),
    )


# ---------------------------------------------------------------------------
# coordinates
# ---------------------------------------------------------------------------


def test_known_angle_images():
    s = math.sqrt(0.5)
    assert np.allclose(angles_to_point(np.array([math.pi / 4])), [s, s], atol=1e-15)
    assert np.allclose(angles_to_point(np.zeros(3)), [1, 0, 0, 0], atol=0)
    assert np.allclose(angles_to_point(np.full(2, HALF_PI)), [0, 0, 1], atol=1e-16)


def test_round_trip_angles():
    rg = np.random.default_rng(0)
    ang = rg.uniform(0.0, HALF_PI, size=(200, 4))
    back = point_to_angles(angles_to_point(ang))
    assert np.max(np.abs(back - ang)) <= 1e-12


def test_round_trip_points():
    pts = sample_uniform(5, 300, 17)
    back = angles_to_point(point_to_angles(pts))
    assert np.max(np.abs(back - pts)) <= 1e-12


def test_pole_rows_give_zero_trailing_angles():
    # once the coordinate tail vanishes the remaining angles are zero
    ang = point_to_angles(np.array([0.6, 0.8, 0.0, 0.0]))
    assert ang[0] == pytest.approx(math.atan2(0.8, 0.6))
    assert ang[1] == 0.0 and ang[2] == 0.0


def test_angle_validation():
    with pytest.raises(ValueError):
        angles_to_point(np.array([0.1, 2.0]))
    with pytest.raises(ValueError):
        angles_to_point(np.array([-0.1]))
    with pytest.raises(ValueError):
        point_to_angles(np.array([-0.5, 0.5]))


def test_uniform_sampling_properties():
    pts = sample_uniform(3, 500, 42)
    assert pts.shape == (500, 4)
    assert np.all(pts >= 0.0)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)
    assert np.array_equal(pts, sample_uniform(3, 500, 42))  # bit-identical
    assert not np.array_equal(pts[:10], sample_uniform(3, 10, 43))


def test_uniform_arc_coverage_d1():
    ang = point_to_angles(sample_uniform(1, 2000, 3)).ravel()
    assert ang.min() < 0.1 and ang.max() > HALF_PI - 0.1
    # uniform-on-arc mean pi/4, sd (pi/2)/sqrt(12); 3 sigma band
    se = HALF_PI / math.sqrt(12.0) / math.sqrt(2000.0)
    assert abs(ang.mean() - math.pi / 4.0) <= 3.0 * se


def test_stream_splitting():
    a = stream(0, "alpha").random(4)
    assert np.array_equal(a, stream(0, "alpha").random(4))
    assert not np.array_equal(a, stream(0, "beta").random(4))
    assert not np.array_equal(a, stream(1, "alpha").random(4))
    assert not np.array_equal(
        stream(0, "alpha", 1).random(4), stream(0, "alpha", 2).random(4)
    )


# ---------------------------------------------------------------------------
# boxes and mixtures
# ---------------------------------------------------------------------------


def test_box_validation():
    with pytest.raises(SpecInvalid):
        AngularBox((0.5,), (0.4,))
    with pytest.raises(SpecInvalid):
        AngularBox((0.0,), (2.0,))
    with pytest.raises(SpecInvalid):
        AngularBox((), ())
    with pytest.raises(SpecInvalid):
        AngularBox((0.0, 0.0), (1.0,))


def test_box_volumes_and_overlap():
    a = AngularBox((0.0, 0.0), (1.0, 1.0))
    b = AngularBox((0.5, 0.5), (1.5, 1.5))
    assert a.volume == pytest.approx(1.0)
    assert a.overlap_volume(b) == pytest.approx(0.25)
    assert b.overlap_volume(a) == pytest.approx(0.25)
    c = AngularBox((1.2, 1.2), (1.5, 1.5))
    assert a.overlap_volume(c) == 0.0


def test_mixture_spec_validation():
    box1 = AngularBox((0.0,), (1.0,))
    box2 = AngularBox((0.0, 0.0), (1.0, 1.0))
    with pytest.raises(SpecInvalid):
        MixtureSpec(dim=2, prior_pos=0.5, box_pos=box1, box_neg=box2)
    with pytest.raises(SpecInvalid):
        MixtureSpec(dim=1, prior_pos=1.5, box_pos=box1, box_neg=box1)
    with pytest.raises(SpecInvalid):
        MixtureSpec(dim=0, prior_pos=0.5, box_pos=box1, box_neg=box1)


def test_mixture_sampling_membership_and_determinism():
    spec = design_spec()
    data = sample_mixture(spec, 500, seed=11)
    assert isinstance(data, LabeledDataset) and data.n == 500
    ang = point_to_angles(data.points)
    assert np.all(spec.box_pos.contains(ang[data.labels == 1.0]))
    assert np.all(spec.box_neg.contains(ang[data.labels == -1.0]))
    again = sample_mixture(spec, 500, seed=11)
    assert np.array_equal(data.points, again.points)
    assert np.array_equal(data.labels, again.labels)
    other = sample_mixture(spec, 500, seed=12)
    assert not np.array_equal(data.labels, other.labels)


def test_mixture_label_frequency():
    spec = design_spec(prior=0.5)
    data = sample_mixture(spec, 10_000, seed=2)
    frac = float(np.mean(data.labels == 1.0))
    assert abs(frac - 0.5) <= 3.0 * 0.5 / math.sqrt(10_000.0)


def test_degenerate_priors():
    spec = design_spec(prior=1.0)
    assert np.all(sample_mixture(spec, 200, seed=3).labels == 1.0)
    spec0 = design_spec(prior=0.0)
    assert np.all(sample_mixture(spec0, 200, seed=3).labels == -1.0)


def test_envelope_audit_catches_lying_bound():
    class LyingBox(AngularBox):
        @property
        def density_bound(self):
            return 0.4 / self.volume  # below the true supremum

    box = LyingBox((0.0, 0.0), (1.0, 1.0))
    with pytest.raises(SpecInvalid, match="envelope"):
        box.sample_angles(np.random.default_rng(0), 10)


# ---------------------------------------------------------------------------
# optimal rule
# ---------------------------------------------------------------------------


def test_decision_regions_and_tie():
    # equal-volume boxes at prior 1/2: the overlap is an exact tie, labeled +1
    a = AngularBox((0.0,), (0.6 * HALF_PI,))
    b = AngularBox((0.4 * HALF_PI,), (HALF_PI,))
    spec = MixtureSpec(dim=1, prior_pos=0.5, box_pos=a, box_neg=b)
    oracle = bayes_oracle(spec)
    pts = angles_to_point(np.array([[0.2], [0.5], [0.8]]) * HALF_PI)
    assert oracle.decide(pts).tolist() == [1.0, 1.0, -1.0]


def test_identical_conditionals_risk_is_minor_prior():
    box = AngularBox((0.0, 0.0), (1.0, 1.0))
    spec = MixtureSpec(dim=2, prior_pos=0.3, box_pos=box, box_neg=box)
    oracle = bayes_oracle(spec)
    assert oracle.exact_risk() == pytest.approx(0.3, abs=1e-15)
    est, se = oracle.mc_risk(5000, seed=4)
    assert abs(est - 0.3) <= max(3.0 * se, 1e-12)


def test_disjoint_boxes_risk_zero():
    a = AngularBox((0.0,), (0.5,))
    b = AngularBox((0.6,), (1.2,))
    spec = MixtureSpec(dim=1, prior_pos=0.5, box_pos=a, box_neg=b)
    oracle = bayes_oracle(spec)
    assert oracle.exact_risk() == 0.0
    data = sample_mixture(spec, 2000, seed=5)
    assert np.array_equal(oracle.decide(data.points), data.labels)


def test_swap_symmetry_flips_decisions():
    spec = design_spec(prior=0.4)
    flipped = MixtureSpec(
        dim=2, prior_pos=0.6, box_pos=spec.box_neg, box_neg=spec.box_pos
    )
    pts = sample_mixture(spec, 400, seed=6).points  # all inside the union
    a = bayes_oracle(spec).decide(pts)
    b = bayes_oracle(flipped).decide(pts)
    assert np.array_equal(a, -b)


def test_exact_risk_matches_midpoint_quadrature():
    spec = design_spec()
    oracle = bayes_oracle(spec)
    m = 400
    h = HALF_PI / m
    mids = (np.arange(m) + 0.5) * h
    T0, T1 = np.meshgrid(mids, mids, indexing="ij")
    grid = np.column_stack([T0.ravel(), T1.ravel()])
    p = spec.prior_pos
    integrand = np.minimum(
        p * spec.box_pos.density(grid), (1.0 - p) * spec.box_neg.density(grid)
    )
    riemann = float(integrand.sum()) * h * h
    assert abs(riemann - oracle.exact_risk()) <= 1e-3


def test_exact_risk_design_value_and_mc_agreement():
    oracle = bayes_oracle(design_spec())
    lo, hi = 0.25 * HALF_PI, 0.8 * HALF_PI
    v_pos = hi * hi
    v_neg = (HALF_PI - lo) ** 2
    want = min(0.5 / v_pos, 0.5 / v_neg) * (hi - lo) ** 2
    assert oracle.exact_risk() == pytest.approx(want, rel=1e-15)
    est, se = oracle.mc_risk(100_000, seed=7)
    assert abs(est - want) <= 3.0 * se


def test_oracle_empirical_error_matches_exact_risk():
    spec = design_spec()
    oracle = bayes_oracle(spec)
    n = 40_000
    data = sample_mixture(spec, n, seed=8)
    err = float(np.mean(oracle.decide(data.points) != data.labels))
    risk = oracle.exact_risk()
    assert abs(err - risk) <= 3.0 * math.sqrt(risk * (1.0 - risk) / n)


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------


def test_save_load_round_trip(tmp_path):
    data = sample_mixture(design_spec(), 150, seed=9)
    path = tmp_path / "mix.csv"
    save_dataset(data, path)
    back = load_dataset(path)
    assert np.array_equal(back.points, data.points)
    assert np.array_equal(back.labels, data.labels)
    # re-serialization is byte-stable
    path2 = tmp_path / "mix2.csv"
    save_dataset(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_load_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,label\n1,0,1\n")
    with pytest.raises(MalformedDataset, match="header"):
        load_dataset(p)
    p.write_text("")
    with pytest.raises(MalformedDataset, match="empty"):
        load_dataset(p)


def test_load_rejects_truncated_row(tmp_path):
    p = tmp_path / "short.csv"
    p.write_text("x0,x1,label\n1,0,1\n0,1\n")
    with pytest.raises(MalformedDataset, match="row 1"):
        load_dataset(p)


def test_load_rejects_unparseable_field(tmp_path):
    p = tmp_path / "junk.csv"
    p.write_text("x0,x1,label\n1,zero,1\n")
    with pytest.raises(MalformedDataset, match="row 0"):
        load_dataset(p)


def test_load_rejects_off_sphere_rows(tmp_path):
    p = tmp_path / "norm.csv"
    p.write_text("x0,x1,label\n1,0,1\n0.8,0.61,-1\n")
    with pytest.raises(MalformedDataset, match="row 1"):
        load_dataset(p)
    p.write_text("x0,x1,label\n-0.6,0.8,1\n")
    with pytest.raises(MalformedDataset, match="row 0"):
        load_dataset(p)
