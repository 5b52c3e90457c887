import numpy as np
import pytest

from svbrdf_uq.errors import ContractError, DimensionMismatchError
from svbrdf_uq.material import ImageGrid, MapStack
from svbrdf_uq.renderer import (
    SCAN_LIGHT_COUNT,
    RenderSet,
    as_direction,
    cosine_weight,
    direction_from_angles,
    ggx_specular,
    reflect,
    render_scan,
    sample_render_set,
    scan_lights,
    shade,
)
from tests.utils import (
    ggx_reference,
    random_directions,
    random_stack,
    shade_reference,
)


@pytest.fixture()
def raise_on_fp_errors():
    with np.errstate(over="raise", invalid="raise"):
        yield


# All tests in this module will raise on overflows and invalid operations
pytestmark = pytest.mark.usefixtures("raise_on_fp_errors")

ZENITH = np.r_[0.0, 0.0, 1.0]


def test_as_direction():
    np.testing.assert_allclose(as_direction([0, 0, 2]), ZENITH)

    with pytest.raises(ContractError, match="length"):
        as_direction([0, 0, 0])

    with pytest.raises(ContractError, match="hemisphere"):
        as_direction([1, 0, -0.1])

    with pytest.raises(ContractError):
        as_direction([1, 0])


def test_ggx_specular_examples():
    # F0 = 0 at normal incidence
    assert ggx_specular(ZENITH, 0.0, 0.5, ZENITH, ZENITH) == 0.0

    res = ggx_specular(ZENITH, 0.5, 1.0, ZENITH, ZENITH)
    expected = ggx_reference(ZENITH, 0.5, 1.0, ZENITH, ZENITH)
    assert res == pytest.approx(expected, abs=1e-6)
    # D = 1 / pi, G = 1 and F = 0.04 at this configuration
    assert res == pytest.approx(0.04 / (4 * np.pi), abs=1e-12)

    # back-facing geometry
    l = direction_from_angles(60.0, 0.0)
    n = direction_from_angles(60.0, 180.0)
    assert ggx_specular(n, 0.5, 0.5, l, ZENITH) == 0.0


def test_ggx_specular_reference():
    rng = np.random.default_rng(2032)
    n_configs = 1000
    normals = random_directions(rng, n_configs, min_z=0.3)
    lights = random_directions(rng, n_configs)
    views = random_directions(rng, n_configs)
    spec = rng.uniform(0.0, 1.0, n_configs)
    rough = rng.uniform(0.05, 1.0, n_configs)

    res = ggx_specular(normals, spec, rough, lights, views)
    expected = np.array(
        [
            ggx_reference(n, s, r, l, v)
            for n, s, r, l, v in zip(normals, spec, rough, lights, views)
        ]
    )
    np.testing.assert_allclose(res, expected, rtol=1e-9, atol=1e-6)

    swapped = ggx_specular(normals, spec, rough, views, lights)
    np.testing.assert_allclose(res, swapped, rtol=0, atol=1e-9)
    assert np.all(res >= 0.0)


def test_ggx_peak_sharpens():
    v = direction_from_angles(30.0, 40.0)
    n = ZENITH
    l = reflect(v, n)
    values = [ggx_specular(n, 0.5, r, l, v) for r in (0.5, 0.3, 0.1, 0.05)]
    assert np.all(np.diff(values) > 0)


def test_shade():
    rng = np.random.default_rng(2032)
    stack = random_stack(rng)
    albedo = ImageGrid(rng.uniform(0.0, 1.0, size=(16, 16, 3)))
    for l, v in zip(random_directions(rng, 3), random_directions(rng, 3)):
        res = shade(stack, albedo, l, v)
        expected = shade_reference(stack, albedo.data, as_direction(l), as_direction(v))
        np.testing.assert_allclose(res.values, expected, rtol=0, atol=1e-6)


def test_shade_diffuse_only():
    stack = MapStack.flat(4, 4, specular=0.0, roughness=0.5)
    albedo = ImageGrid.constant(0.5, 4, 4)
    l = direction_from_angles(35.0, 10.0)
    res = shade(stack, albedo, l, l)
    np.testing.assert_allclose(res.values, 0.5 / np.pi, atol=1e-12)

    dark = shade(stack, ImageGrid.constant(0.0, 4, 4), ZENITH, ZENITH)
    np.testing.assert_array_equal(dark.values, 0.0)

    # brighter albedo never darkens a pixel
    rng = np.random.default_rng(1)
    stack = random_stack(rng, 4, 4)
    low = shade(stack, ImageGrid.constant(0.2, 4, 4), ZENITH, ZENITH).values
    high = shade(stack, ImageGrid.constant(0.6, 4, 4), ZENITH, ZENITH).values
    assert np.all(high >= low)

    with pytest.raises(DimensionMismatchError):
        shade(stack, ImageGrid.constant(0.5, 5, 4), ZENITH, ZENITH)


@pytest.mark.parametrize(
    "theta, expected",
    [(0.0, 1.0), (60.0, 0.5), (89.9, np.cos(np.deg2rad(89.9)))],
)
def test_cosine_weight(theta, expected):
    assert cosine_weight(direction_from_angles(theta, 25.0)) == pytest.approx(
        expected, abs=1e-9
    )


def test_sample_render_set():
    s1 = sample_render_set(50, 7)
    s2 = sample_render_set(50, 7)
    assert len(s1) == 50
    np.testing.assert_array_equal(s1.lights, s2.lights)
    np.testing.assert_array_equal(s1.views, s2.views)
    assert s1.digest() == s2.digest()

    assert np.all(s1.lights[:, 2] > 0) and np.all(s1.views[:, 2] > 0)
    np.testing.assert_allclose(np.linalg.norm(s1.lights, axis=1), 1.0, atol=1e-9)

    default = sample_render_set()
    mean_cos = np.mean([cosine_weight(l) for l, _ in default.pairs()])
    assert 0.5 <= mean_cos <= 0.85

    assert sample_render_set(50, 8).digest() != s1.digest()

    with pytest.raises(ContractError):
        sample_render_set(0)


def test_render_set_validation():
    with pytest.raises(ContractError):
        RenderSet(np.zeros((0, 3)), np.zeros((0, 3)))
    with pytest.raises(ContractError):
        RenderSet([[0, 0, 1]], [[0, 0, 1], [0, 0, 1]])
    with pytest.raises(ContractError):
        RenderSet([[0, 0, 1]], [[0, 1, -1]])

    s = RenderSet([[0, 0, 2], [1, 0, 1]], [[0, 0, 1], [0, 0, 1]])
    np.testing.assert_allclose(s.lights[1], [2 ** -0.5, 0, 2 ** -0.5])
    assert s.permuted([1, 0]).digest() != s.digest()


def test_render_scan():
    lights = scan_lights()
    assert lights.shape == (SCAN_LIGHT_COUNT, 3)
    assert np.all(lights[:, 2] > 0)

    flat = MapStack.flat(8, 8, specular=0.0, roughness=1.0)
    scan = render_scan(flat, ImageGrid.constant(0.5, 8, 8))
    values = scan.data
    assert np.all(values == values[0, 0, 0])
    # the Schlick tail of the rough lobe adds a little to the diffuse base
    assert 0.5 <= values[0, 0, 0] < 0.6

    # only the Fresnel tail survives a black base color
    black = render_scan(
        MapStack.flat(8, 8, specular=0.0), ImageGrid.constant(0.0, 8, 8)
    )
    assert np.all(black.data < 0.01)

    rgb = render_scan(flat, ImageGrid.constant(0.5, 8, 8, channels=3))
    assert rgb.channels == 3

    with pytest.raises(DimensionMismatchError):
        render_scan(flat, ImageGrid.constant(0.5, 8, 9))


def test_render_scan_tilt_darkens():
    rng = np.random.default_rng(2032)
    for phi in rng.uniform(0.0, 360.0, size=5):
        normals = np.zeros((1, 2, 3))
        normals[0, 0] = (0.0, 0.0, 1.0)
        normals[0, 1] = direction_from_angles(45.0, phi)
        stack = MapStack.from_arrays(normals, np.zeros((1, 2)), np.ones((1, 2)))
        scan = render_scan(stack, ImageGrid.constant(0.8, 2, 1))
        assert scan.data[0, 1, 0] < scan.data[0, 0, 0]
