import math
import pickle

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pulse.autodiff import Graph, finite_difference_check
from pulse.formats import encode_tensors, spec_tensors
from pulse.generator import (
    DESK,
    FULL_SIZE,
    GeneratorError,
    GeneratorSpec,
    LatentState,
    build_synthesis,
    check_activation_scale,
    default_trainable_noise,
    init_random_generator,
    initial_state,
    inverse_map,
    layer_resolutions,
    map_latent,
    output_resolution,
    sample_latent_pushforward,
    sample_noise,
    state_bindings,
    synthesize,
    weight_shapes,
)
from pulse.objective import geocross_loss


def _with_weights(spec, **changes):
    weights = dict(spec.weights)
    weights.update({k.replace("__", "."): v for k, v in changes.items()})
    return GeneratorSpec(spec.d, spec.k, spec.r0, spec.widths, weights, spec.out_channels, spec.slope)


@pytest.fixture(scope="module")
def identity_spec(tiny_spec):
    return _with_weights(tiny_spec, mapping__A=np.eye(tiny_spec.d), mapping__b=np.zeros(tiny_spec.d))


# -- mapping --------------------------------------------------------------------


def test_identity_mapping_keeps_positive_latents(identity_spec, rng):
    z = rng.random(identity_spec.d)
    assert np.array_equal(map_latent(identity_spec, z), z)


def test_identity_mapping_scales_negative_entries(identity_spec):
    z = -np.ones(identity_spec.d)
    assert np.allclose(map_latent(identity_spec, z), -0.2, rtol=0, atol=1e-15)


def test_scalar_inverse_example():
    base = init_random_generator(d=1, k=2, r0=4, widths=(2, 2), seed=0)
    spec = _with_weights(base, mapping__A=np.eye(1), mapping__b=np.zeros(1))
    assert inverse_map(spec, np.array([-0.2]))[0] == pytest.approx(-1.0, abs=1e-15)


def test_roundtrip_100_latents(tiny_spec, rng):
    z = rng.standard_normal((100, tiny_spec.d)) * 3
    assert np.max(np.abs(inverse_map(tiny_spec, map_latent(tiny_spec, z)) - z)) <= 1e-9


@given(seed=st.integers(0, 2**32 - 1))
def test_roundtrip_property(desk_spec, seed):
    z = np.random.default_rng(seed).standard_normal(desk_spec.d) * 5
    assert np.max(np.abs(inverse_map(desk_spec, map_latent(desk_spec, z)) - z)) <= 1e-9


def test_zero_latent(identity_spec):
    assert np.array_equal(map_latent(identity_spec, np.zeros(identity_spec.d)), np.zeros(identity_spec.d))
    assert np.array_equal(inverse_map(identity_spec, np.zeros(identity_spec.d)), np.zeros(identity_spec.d))


def test_dim_mismatch(tiny_spec):
    with pytest.raises(GeneratorError):
        map_latent(tiny_spec, np.zeros(tiny_spec.d + 1))
    with pytest.raises(GeneratorError):
        inverse_map(tiny_spec, np.zeros(tiny_spec.d + 1))


def test_singular_mapping_rejected(tiny_spec):
    with pytest.raises(GeneratorError, match="ill-conditioned"):
        _with_weights(tiny_spec, mapping__A=np.zeros((tiny_spec.d, tiny_spec.d)))


# -- push-forward sampling -------------------------------------------------------


def test_pushforward_preimage_on_sphere(desk_spec):
    w = sample_latent_pushforward(desk_spec, seed=4)
    assert abs(np.linalg.norm(inverse_map(desk_spec, w)) - math.sqrt(desk_spec.d)) <= 1e-9


def test_pushforward_d512():
    spec = init_random_generator(d=512, k=2, r0=4, widths=(4, 4), seed=0)
    w = sample_latent_pushforward(spec, seed=0)
    assert np.linalg.norm(inverse_map(spec, w)) == pytest.approx(22.6274, abs=1e-4)
    assert abs(np.linalg.norm(inverse_map(spec, w)) - math.sqrt(512)) <= 1e-9


def test_pushforward_deterministic(desk_spec):
    assert np.array_equal(sample_latent_pushforward(desk_spec, 9), sample_latent_pushforward(desk_spec, 9))


# -- shapes --------------------------------------------------------------------


def test_resolution_formula():
    assert output_resolution(DESK["k"], DESK["r0"]) == 32
    assert output_resolution(FULL_SIZE["k"], FULL_SIZE["r0"]) == 1024
    assert layer_resolutions(6, 8) == [8, 8, 16, 16, 32, 32]
    res = layer_resolutions(18, 4)
    assert res[0] == 4 and res[-1] == 1024 and len(res) == 18
    # doubling after every other layer
    assert all(res[i] == res[i + 1] for i in range(0, 18, 2))


def test_full_size_weight_shapes():
    shapes = weight_shapes(FULL_SIZE["d"], FULL_SIZE["k"], FULL_SIZE["r0"], FULL_SIZE["widths"])
    assert shapes["mapping.A"] == (512, 512)
    assert shapes["layer17.style_scale"] == (FULL_SIZE["widths"][-1], 512)
    assert len([n for n in shapes if n.endswith(".conv")]) == 18


def test_desk_default_output(desk_spec):
    assert (desk_spec.d, desk_spec.k, desk_spec.resolution) == (64, 6, 32)
    assert synthesize(desk_spec, initial_state(desk_spec, 0)).shape == (32, 32)


# -- synthesis -----------------------------------------------------------------


def test_output_in_unit_interval(desk_spec):
    img = synthesize(desk_spec, initial_state(desk_spec, 1))
    assert img.min() > 0 and img.max() < 1


def test_zero_noise_gain_ignores_noise(tiny_spec):
    gains = {f"layer{i}__noise_gain": np.zeros(c) for i, c in enumerate(tiny_spec.widths)}
    spec = _with_weights(tiny_spec, **gains)
    a = initial_state(spec, 0)
    b = initial_state(spec, 0, noise_seed=99)
    assert not np.array_equal(a.noise[0], b.noise[0])
    assert np.array_equal(synthesize(spec, a), synthesize(spec, b))


def test_resampled_noise_changes_output(desk_spec):
    a = initial_state(desk_spec, 0)
    b = initial_state(desk_spec, 0, noise_seed=99)
    assert np.array_equal(a.styles, b.styles)
    assert np.max(np.abs(synthesize(desk_spec, a) - synthesize(desk_spec, b))) > 0


def test_doubling_a_style_changes_output(desk_spec):
    s = initial_state(desk_spec, 2)
    t = s.copy()
    t.styles[3] *= 2
    assert np.max(np.abs(synthesize(desk_spec, s) - synthesize(desk_spec, t))) > 0


def test_synthesize_is_deterministic(desk_spec):
    s = initial_state(desk_spec, 5)
    assert synthesize(desk_spec, s).tobytes() == synthesize(desk_spec, s).tobytes()


def test_color_output():
    spec = init_random_generator(d=8, k=2, r0=4, widths=(4, 4), seed=0, out_channels=3)
    assert synthesize(spec, initial_state(spec, 0)).shape == (4, 4, 3)


def test_initial_state_is_exact_tiling(desk_spec):
    s = initial_state(desk_spec, 3)
    assert np.all(s.styles == s.styles[0])
    assert geocross_loss(s.styles) == 0.0
    assert np.allclose(np.linalg.norm(s.styles, axis=1), math.sqrt(desk_spec.d), rtol=0, atol=1e-12)
    assert s.trainable_noise_count == default_trainable_noise(6) == 2


def test_state_shape_checks(desk_spec):
    s = initial_state(desk_spec, 0)
    bad = LatentState(s.styles[:, :-1], s.noise)
    with pytest.raises(GeneratorError):
        synthesize(desk_spec, bad)
    with pytest.raises(GeneratorError):
        synthesize(desk_spec, LatentState(s.styles, s.noise[:-1]))
    with pytest.raises(GeneratorError):
        synthesize(desk_spec, LatentState(s.styles, [n[:-1] for n in s.noise]))


def test_synthesis_gradient_matches_finite_differences(tiny_spec, rng):
    g = Graph()
    styles = g.input("styles", (tiny_spec.k, tiny_spec.d), trainable=True)
    noise = [g.input(f"noise{i}", shape, trainable=i < 2) for i, shape in enumerate(tiny_spec.noise_shapes)]
    image = build_synthesis(g, tiny_spec, styles, noise)
    g.set_output(g.sum(g.mul(image, g.const(rng.standard_normal(tiny_spec.image_shape)))))
    state = initial_state(tiny_spec, 0)
    state.styles = state.styles + 0.3 * rng.standard_normal(state.styles.shape)
    report = finite_difference_check(g, state_bindings(state), 1e-5, 1e-4)
    assert report.passed, report.errors


# -- noise -----------------------------------------------------------------------


def test_noise_reproducible(desk_spec):
    a, b = sample_noise(desk_spec, 3), sample_noise(desk_spec, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert [n.shape for n in a] == desk_spec.noise_shapes


def test_noise_mean_near_zero(desk_spec):
    entries = np.concatenate([n.ravel() for s in range(4) for n in sample_noise(desk_spec, s)])
    assert entries.size >= 10_000
    assert abs(entries.mean()) <= 3 / 100


# -- random init ----------------------------------------------------------------


def test_same_seed_bit_identical_weights():
    a = encode_tensors(spec_tensors(init_random_generator(seed=7)))
    b = encode_tensors(spec_tensors(init_random_generator(seed=7)))
    assert a == b


@pytest.mark.parametrize("seed", range(20))
def test_condition_check_passes(seed):
    spec = init_random_generator(seed=seed)
    assert np.linalg.cond(spec.weights["mapping.A"]) < 1e6


def test_activation_scale_in_range(desk_spec):
    stds = check_activation_scale(desk_spec)
    assert all(0.1 <= s <= 10 for s in stds)


def test_inconsistent_widths_rejected():
    with pytest.raises(GeneratorError):
        init_random_generator(d=8, k=3, r0=4, widths=(4, 4))


def test_weights_are_immutable(desk_spec):
    with pytest.raises(ValueError):
        desk_spec.weights["mapping.b"][0] = 1.0


def test_spec_pickles_without_graph_cache(desk_spec):
    synthesize(desk_spec, initial_state(desk_spec, 0))
    clone = pickle.loads(pickle.dumps(desk_spec))
    assert clone._cache == {}
    s = initial_state(clone, 0)
    assert np.array_equal(synthesize(clone, s), synthesize(desk_spec, s))
