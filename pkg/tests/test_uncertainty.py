import numpy as np
import pytest

from svbrdf_uq.errors import (
    ContractError,
    DimensionMismatchError,
    InsufficientSamplesError,
)
from svbrdf_uq.material import ImageGrid, MapStack
from svbrdf_uq.predictor import (
    Predictor,
    PredictorConfig,
    PredictorWeights,
    init_params,
)
from svbrdf_uq.renderer import sample_render_set
from svbrdf_uq.synthdata import MaterialFamily, generate_material
from svbrdf_uq.uncertainty import (
    SampleSet,
    StochasticPredictor,
    build_report,
    grey_albedo,
    mc_sample,
    mc_scores,
    per_map_std,
    render_deviation,
    sample_mean,
    sigma_brdf,
)
from tests.utils import (
    per_map_std_reference,
    random_render_set,
    random_stack,
    sigma_brdf_reference,
)


@pytest.fixture()
def raise_on_fp_errors():
    with np.errstate(over="raise", invalid="raise"):
        yield


pytestmark = pytest.mark.usefixtures("raise_on_fp_errors")


@pytest.fixture(scope="module")
def weights():
    cfg = PredictorConfig(patch_radius=1, hidden_widths=(8, 8), dropout_rate=0.3)
    rng = np.random.default_rng(2032)
    return PredictorWeights(cfg, tuple(init_params(cfg, rng)))


@pytest.fixture(scope="module")
def image():
    rng = np.random.default_rng(12)
    return ImageGrid(rng.uniform(size=(16, 16, 3)))


@pytest.fixture(scope="module")
def family_scans():
    return [generate_material(f, 3, size=64).scan for f in MaterialFamily]


def test_per_map_std():
    rng = np.random.default_rng(2032)
    stacks = [random_stack(rng, 4, 5) for _ in range(4)]
    u = SampleSet(stacks)
    assert len(u) == 4
    assert u.shape == (4, 5)

    res = per_map_std(u)
    expected = per_map_std_reference(stacks)
    for r, e in zip(res, expected):
        np.testing.assert_allclose(r, e, rtol=1e-9, atol=1e-15)

    same = per_map_std(SampleSet([stacks[0]] * 3))
    for r in same:
        np.testing.assert_array_equal(r, 0.0)

    with pytest.raises(InsufficientSamplesError):
        per_map_std(SampleSet(stacks[:1]))

    with pytest.raises(ContractError):
        SampleSet([])

    with pytest.raises(DimensionMismatchError):
        SampleSet([stacks[0], random_stack(rng, 5, 4)])


def test_sigma_brdf():
    rng = np.random.default_rng(2032)
    stacks = [random_stack(rng, 4, 4) for _ in range(5)]
    s = random_render_set(rng, 8)
    k = grey_albedo(4, 4)

    res, res_map = sigma_brdf(SampleSet(stacks), s, k)
    expected, expected_map = sigma_brdf_reference(stacks, s, k.data, 1e-12)
    np.testing.assert_allclose(res_map, expected_map, rtol=1e-7)
    assert res == pytest.approx(expected)

    # the grey albedo is the default
    default, _ = sigma_brdf(SampleSet(stacks), s)
    assert default == res

    # averaging inside the root gives a larger value for |S| > 1
    inside, inside_map = sigma_brdf(SampleSet(stacks), s, k, variance_inside=True)
    assert np.all(inside_map > res_map)
    np.testing.assert_allclose(inside_map - res_map, 0.5 * np.log(len(s)), rtol=1e-9)

    with pytest.warns(UserWarning, match="noisy"):
        sigma_brdf(SampleSet(stacks), random_render_set(rng, 2), k)

    with pytest.raises(InsufficientSamplesError):
        sigma_brdf(SampleSet(stacks[:1]), s, k)

    with pytest.raises(DimensionMismatchError):
        sigma_brdf(SampleSet(stacks), s, grey_albedo(5, 4))


def test_sigma_brdf_identical_samples():
    stack = random_stack(np.random.default_rng(3), 16, 16)
    s = sample_render_set(8, 0)
    eps = 1e-12

    res, res_map = sigma_brdf(SampleSet([stack] * 4), s, eps=eps)
    np.testing.assert_array_equal(res_map, np.log(eps))
    assert res == np.log(eps)


def test_mc_sample(weights, image):
    predictor = Predictor(weights)
    assert isinstance(predictor, StochasticPredictor)

    u1 = mc_sample(predictor, image, n=4, seed=7, source="x")
    u2 = mc_sample(predictor, image, n=4, seed=7)
    assert len(u1) == 4
    assert u1.source == "x"
    assert u1.dropout_rate == 0.3
    for a, b in zip(u1.samples, u2.samples):
        np.testing.assert_array_equal(a.normals.vectors, b.normals.vectors)
        np.testing.assert_array_equal(a.spec(), b.spec())

    # each sample has its own dropout mask
    assert not np.array_equal(u1.samples[0].spec(), u1.samples[1].spec())

    u3 = mc_sample(predictor, image, n=4, seed=8)
    assert not np.array_equal(u1.samples[0].spec(), u3.samples[0].spec())

    # a prefix of a longer run is the shorter run
    u4 = mc_sample(predictor, image, n=6, seed=7)
    np.testing.assert_array_equal(u4.samples[3].rough(), u1.samples[3].rough())

    with pytest.raises(TypeError):
        mc_sample(object(), image, n=4)

    with pytest.raises(ContractError):
        mc_sample(predictor, image, n=0)


def test_zero_dropout_gives_zero_uncertainty(weights, image):
    predictor = Predictor(weights, dropout_rate=0.0)
    assert predictor.dropout_rate == 0.0

    u = mc_sample(predictor, image, n=4, seed=1)
    report = build_report(u, sample_render_set(8, 0))
    for sigma in (report.sigma_normals, report.sigma_spec, report.sigma_rough):
        np.testing.assert_array_equal(sigma, 0.0)
    assert report.sigma_brdf == np.log(report.eps)

    # all samples equal the deterministic pass
    det = predictor.predict(image)
    np.testing.assert_array_equal(u.samples[2].spec(), det.spec())


def test_build_report(weights, image):
    u = mc_sample(Predictor(weights), image, n=5, seed=0)
    s = sample_render_set(8, 0)
    report = build_report(u, s)

    assert report.n == 5
    assert report.render_set_hash == s.digest()
    assert report.sigma_brdf_map.shape == (16, 16)
    assert report.sigma_brdf > np.log(report.eps)
    assert np.all(report.sigma_spec >= 0.0)
    assert np.any(report.sigma_spec > 0.0)

    scalars = report.scalars()
    assert scalars["sigma_brdf"] == report.sigma_brdf
    assert scalars["dropout_rate"] == 0.3
    assert scalars["sigma_spec_mean"] == pytest.approx(np.mean(report.sigma_spec))


def test_sample_mean_and_render_deviation():
    rng = np.random.default_rng(2032)
    stack = random_stack(rng, 6, 6)
    other = random_stack(rng, 6, 6)
    s = random_render_set(rng, 4)

    mean = sample_mean(SampleSet([stack, stack]))
    np.testing.assert_allclose(mean.normals.vectors, stack.normals.vectors, atol=1e-12)
    np.testing.assert_allclose(mean.spec(), stack.spec())

    dev = render_deviation(SampleSet([stack, other]), stack, s)
    assert dev.shape == (2,)
    assert dev[0] == 0.0
    assert dev[1] > 0.0

    region = (slice(0, 3), slice(0, 3))
    part = render_deviation(SampleSet([stack, other]), stack, s, region=region)
    assert part[0] == 0.0
    assert part[1] != dev[1]

    with pytest.raises(DimensionMismatchError):
        render_deviation(SampleSet([stack]), random_stack(rng, 5, 6), s)


def test_mc_scores(weights, image):
    predictor = Predictor(weights)
    s = sample_render_set(8, 0)
    flat = ImageGrid(np.full((16, 16, 3), 0.5))
    scores = mc_scores(predictor, [image, flat], s, n=3, seed=4)

    assert set(scores) == {"sigma_brdf", "sigma_normals", "sigma_spec", "sigma_rough"}
    for values in scores.values():
        assert values.shape == (2,)

    single = build_report(mc_sample(predictor, image, 3, 4), s)
    assert scores["sigma_brdf"][0] == single.sigma_brdf


def test_flat_stack_has_no_spread():
    stacks = [MapStack.flat(4, 4), MapStack.flat(4, 4)]
    sigma_n, sigma_s, sigma_r = per_map_std(SampleSet(stacks))
    assert np.all(sigma_n == 0.0)


@pytest.mark.parametrize("seed", range(20))
def test_uncertainty_reference(seed):
    rng = np.random.default_rng(seed)
    stacks = [random_stack(rng) for _ in range(3)]
    s = random_render_set(rng, 8)
    k = grey_albedo(16, 16)
    u = SampleSet(stacks)

    res, res_map = sigma_brdf(u, s, k)
    expected, expected_map = sigma_brdf_reference(stacks, s, k.data, 1e-12)
    np.testing.assert_allclose(res_map, expected_map, rtol=1e-9, atol=1e-6)
    assert res == pytest.approx(expected, abs=1e-6)

    for r, e in zip(per_map_std(u), per_map_std_reference(stacks)):
        np.testing.assert_allclose(r, e, rtol=1e-9, atol=1e-12)


def test_sigma_brdf_order_invariant():
    rng = np.random.default_rng(2032)
    stacks = [random_stack(rng) for _ in range(5)]
    s = sample_render_set(8, 3)
    res, res_map = sigma_brdf(SampleSet(stacks), s)

    for order in ([4, 2, 0, 3, 1], [1, 0, 2, 3, 4]):
        shuffled, shuffled_map = sigma_brdf(SampleSet([stacks[i] for i in order]), s)
        np.testing.assert_allclose(shuffled_map, res_map, rtol=1e-10)
        assert shuffled == pytest.approx(res, rel=1e-10)

    permuted = s.permuted([5, 2, 7, 0, 1, 6, 4, 3])
    other, other_map = sigma_brdf(SampleSet(stacks), permuted)
    np.testing.assert_allclose(other_map, res_map, rtol=1e-10)
    assert other == pytest.approx(res, rel=1e-10)


def noisy_roughness(stack, z, scale):
    """Copies of `stack` with per-sample roughness offsets ``scale * z[j]``."""
    return SampleSet(
        [
            MapStack.from_arrays(
                stack.normals.vectors,
                stack.spec(),
                np.clip(stack.rough() + scale * dz, 0.0, 1.0),
                ppi=stack.ppi,
            )
            for dz in z
        ]
    )


@pytest.mark.parametrize("seed", range(20))
def test_sigma_brdf_grows_with_roughness_noise(seed):
    rng = np.random.default_rng(seed)
    stack = random_stack(rng, min_rough=0.3)
    z = rng.normal(size=(8, 16, 16))
    s = sample_render_set(8, 0)

    low, _ = sigma_brdf(noisy_roughness(stack, z, 0.05), s)
    high, _ = sigma_brdf(noisy_roughness(stack, z, 0.10), s)
    assert high > low


@pytest.mark.parametrize("c", [0.5, 2.0, 3.0])
def test_per_map_std_scales_linearly(c):
    rng = np.random.default_rng(2032)
    normals = random_stack(rng).normals.vectors
    spec0, rough0 = np.full((16, 16), 0.5), np.full((16, 16), 0.5)
    dev = rng.uniform(-0.1, 0.1, size=(4, 2, 16, 16))

    def spread(scale):
        return SampleSet(
            [
                MapStack.from_arrays(
                    normals, spec0 + scale * d[0], rough0 + scale * d[1]
                )
                for d in dev
            ]
        )

    _, base_spec, base_rough = per_map_std(spread(1.0))
    _, spec, rough = per_map_std(spread(c))
    np.testing.assert_allclose(spec, c * base_spec, rtol=1e-9, atol=1e-15)
    np.testing.assert_allclose(rough, c * base_rough, rtol=1e-9, atol=1e-15)


def test_sigma_brdf_converges_in_sample_count(weights, family_scans):
    scans = family_scans
    s = sample_render_set(8, 0)
    predictor = Predictor(weights)

    few = np.median(mc_scores(predictor, scans, s, n=8, seed=0)["sigma_brdf"])
    many = np.median(mc_scores(predictor, scans, s, n=64, seed=0)["sigma_brdf"])
    assert abs(few - many) <= 0.25 * abs(many)
