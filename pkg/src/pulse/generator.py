"""A small style-based generator: mapping layer, per-layer styles, synthesis stack.

The optimized latents live on the radius-sqrt(d) sphere. Each of the ``k``
synthesis layers receives its own sphere vector pushed through the mapping
layer, ``w_i = leaky_relu(A v_i + b)``. With all ``v_i`` equal this is the
usual single-latent generator whose mapped latent is tiled ``k`` times.

Layer ``i`` (upsampling x2 on every even layer after the first two):

    h = conv3x3(x) + bias
    h = h + gain * noise_i            (one noise map per layer, per-channel gain)
    h = leaky_relu(h)
    h = h * (1 + scale_i(w_i)) + shift_i(w_i)

followed by a 1x1 convolution to the output channels and a sigmoid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Graph, evaluate
from .sphere import sample_sphere

MAX_CONDITION = 1e6

DESK = {"d": 64, "k": 6, "r0": 8, "widths": (32, 32, 16, 16, 8, 8)}
FULL_SIZE = {"d": 512, "k": 18, "r0": 4,
         "widths": (512,) * 10 + (256, 256, 128, 128, 64, 64, 32, 32)}


class GeneratorError(ValueError):
    pass


def output_resolution(k: int, r0: int) -> int:
    return r0 * 2 ** (math.ceil(k / 2) - 1)


def layer_resolutions(k: int, r0: int) -> list[int]:
    return [r0 * 2 ** (i // 2) for i in range(k)]


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    d: int
    k: int
    r0: int
    widths: tuple[int, ...]
    weights: dict[str, np.ndarray]
    out_channels: int = 1
    slope: float = 0.2
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) != self.k:
            raise GeneratorError(f"need {self.k} channel widths, got {len(self.widths)}")
        if self.out_channels not in (1, 3):
            raise GeneratorError("out_channels must be 1 or 3")
        expected = weight_shapes(self.d, self.k, self.r0, self.widths, self.out_channels)
        missing = sorted(set(expected) - set(self.weights))
        if missing:
            raise GeneratorError(f"missing weights: {', '.join(missing)}")
        frozen = {}
        for name, shape in expected.items():
            # C order keeps BLAS summation order, hence results, independent of the source layout
            arr = np.array(self.weights[name], dtype=np.float64, order="C")
            if arr.shape != shape:
                raise GeneratorError(f"weight {name!r}: expected {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise GeneratorError(f"weight {name!r} has non-finite entries")
            arr.flags.writeable = False
            frozen[name] = arr
        object.__setattr__(self, "weights", frozen)
        cond = np.linalg.cond(frozen["mapping.A"])
        if not cond < MAX_CONDITION:
            raise GeneratorError(f"mapping matrix is ill-conditioned (cond={cond:.3g})")

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_cache"] = {}  # compiled graphs hold closures; rebuilt on demand
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    @property
    def resolution(self) -> int:
        return output_resolution(self.k, self.r0)

    @property
    def noise_shapes(self) -> list[tuple[int, int]]:
        return [(r, r) for r in layer_resolutions(self.k, self.r0)]

    @property
    def image_shape(self) -> tuple[int, ...]:
        r = self.resolution
        return (r, r) if self.out_channels == 1 else (r, r, self.out_channels)


def weight_shapes(d, k, r0, widths, out_channels=1) -> dict[str, tuple[int, ...]]:
    shapes = {
        "mapping.A": (d, d),
        "mapping.b": (d,),
        "synthesis.const": (widths[0], r0, r0),
    }
    prev = widths[0]
    for i, c in enumerate(widths):
        shapes[f"layer{i}.conv"] = (c, prev, 3, 3)
        shapes[f"layer{i}.bias"] = (c,)
        shapes[f"layer{i}.noise_gain"] = (c,)
        shapes[f"layer{i}.style_scale"] = (c, d)
        shapes[f"layer{i}.style_shift"] = (c, d)
        prev = c
    shapes["to_image.weight"] = (out_channels, prev, 1, 1)
    shapes["to_image.bias"] = (out_channels,)
    return shapes


@dataclass
class LatentState:
    styles: np.ndarray  # (k, d), rows on the radius-sqrt(d) sphere
    noise: list[np.ndarray]
    trainable_noise_count: int = 0

    def copy(self) -> "LatentState":
        return LatentState(self.styles.copy(), [n.copy() for n in self.noise],
                           self.trainable_noise_count)

    def check(self, spec: GeneratorSpec) -> None:
        if self.styles.shape != (spec.k, spec.d):
            raise GeneratorError(f"styles: expected {(spec.k, spec.d)}, got {self.styles.shape}")
        if len(self.noise) != spec.k:
            raise GeneratorError(f"expected {spec.k} noise maps, got {len(self.noise)}")
        for i, (n, shape) in enumerate(zip(self.noise, spec.noise_shapes)):
            if n.shape != shape:
                raise GeneratorError(f"noise map {i}: expected {shape}, got {n.shape}")
        if not 0 <= self.trainable_noise_count <= spec.k:
            raise GeneratorError("trainable_noise_count out of range")


# -- mapping layer ------------------------------------------------------------


def _leaky(x, slope):
    return np.where(x > 0, x, slope * x)


def map_latent(spec: GeneratorSpec, z) -> np.ndarray:
    """w = leaky_relu(A z + b), for a vector or a stack of row vectors."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != spec.d:
        raise GeneratorError(f"latent must have dimension {spec.d}, got {z.shape}")
    return _leaky(z @ spec.weights["mapping.A"].T + spec.weights["mapping.b"], spec.slope)


def inverse_map(spec: GeneratorSpec, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape[-1] != spec.d:
        raise GeneratorError(f"mapped latent must have dimension {spec.d}, got {w.shape}")
    pre = np.where(w > 0, w, w / spec.slope) - spec.weights["mapping.b"]
    try:
        return np.linalg.solve(spec.weights["mapping.A"], pre.T).T
    except np.linalg.LinAlgError as exc:
        raise GeneratorError("mapping matrix is singular") from exc


def sample_latent_pushforward(spec: GeneratorSpec, seed=None) -> np.ndarray:
    """A draw from the mapping layer's push-forward of the uniform sphere."""
    return map_latent(spec, sample_sphere(spec.d, seed))


def sample_noise(spec: GeneratorSpec, seed=None) -> list[np.ndarray]:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return [rng.standard_normal(shape) for shape in spec.noise_shapes]


def initial_state(spec: GeneratorSpec, seed=None, trainable_noise_count: int | None = None,
                  noise_seed=None) -> LatentState:
    """All k styles equal to one sphere draw (exact tiling), fresh noise.

    The shared style is the pre-image of a push-forward sample, so the
    synthesis layers see a mapped latent distributed like the generator's own.
    """
    ss = np.random.SeedSequence(seed)
    style_seq, noise_seq = ss.spawn(2)
    w = sample_latent_pushforward(spec, np.random.default_rng(style_seq))
    v = inverse_map(spec, w)
    if noise_seed is not None:
        noise_seq = np.random.SeedSequence(noise_seed).spawn(2)[1]
    if trainable_noise_count is None:
        trainable_noise_count = default_trainable_noise(spec.k)
    return LatentState(np.tile(v, (spec.k, 1)), sample_noise(spec, np.random.default_rng(noise_seq)),
                       trainable_noise_count)


def default_trainable_noise(k: int) -> int:
    return math.ceil(k / 3)


# -- synthesis ----------------------------------------------------------------


def build_synthesis(g: Graph, spec: GeneratorSpec, styles, noise, name: str | None = None):
    """Add the synthesis network to ``g``; returns the image node ((H, W) or (H, W, C))."""
    wt = spec.weights
    mapped = g.leaky_relu(
        g.add(g.matmul(styles, g.const(wt["mapping.A"].T)), g.const(wt["mapping.b"])),
        spec.slope,
    )
    x = g.const(wt["synthesis.const"])
    for i, c in enumerate(spec.widths):
        if i >= 2 and i % 2 == 0:
            x = g.upsample2(x)
        x = g.conv2d(x, g.const(wt[f"layer{i}.conv"]))
        x = g.add(x, g.const(wt[f"layer{i}.bias"][:, None, None]))
        gain = g.const(wt[f"layer{i}.noise_gain"][:, None, None])
        x = g.add(x, g.mul(gain, noise[i]))
        x = g.leaky_relu(x, spec.slope)
        w_i = g.row(mapped, i)
        scale = g.reshape(g.matmul(g.const(wt[f"layer{i}.style_scale"]), w_i), (c, 1, 1))
        shift = g.reshape(g.matmul(g.const(wt[f"layer{i}.style_shift"]), w_i), (c, 1, 1))
        x = g.add(g.add(x, g.mul(x, scale)), shift)
    x = g.conv2d(x, g.const(wt["to_image.weight"]))
    x = g.add(x, g.const(wt["to_image.bias"][:, None, None]))
    x = g.sigmoid(x)
    r = spec.resolution
    if spec.out_channels == 1:
        return g.reshape(x, (r, r), name=name)
    return g.transpose(x, (1, 2, 0), name=name)


def synthesis_graph(spec: GeneratorSpec, trainable_noise_count: int = 0) -> Graph:
    key = ("synthesis", trainable_noise_count)
    if key not in spec._cache:
        g = Graph()
        styles = g.input("styles", (spec.k, spec.d), trainable=True)
        noise = [g.input(f"noise{i}", shape, trainable=i < trainable_noise_count)
                 for i, shape in enumerate(spec.noise_shapes)]
        image = build_synthesis(g, spec, styles, noise, name="image")
        g.set_output(g.sum(image))
        spec._cache[key] = g
    return spec._cache[key]


def state_bindings(state: LatentState) -> dict[str, np.ndarray]:
    b = {"styles": state.styles}
    b.update({f"noise{i}": n for i, n in enumerate(state.noise)})
    return b


def synthesize(spec: GeneratorSpec, state: LatentState) -> np.ndarray:
    state.check(spec)
    g = synthesis_graph(spec)
    return evaluate(g, state_bindings(state), ["image"])["image"]


# -- random weights -------------------------------------------------------------


def _orthogonal(rng, rows, cols):
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


def _f32(a):
    # weights are stored as float32; keep the in-memory copy exactly representable
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def init_random_generator(d: int = DESK["d"], k: int = DESK["k"], r0: int = DESK["r0"],
                          widths=None, seed=0, out_channels: int = 1, slope: float = 0.2,
                          style_scale: float = 0.5, style_shift: float = 0.1,
                          noise_strength: float = 0.03, output_gain: float = 2.0) -> GeneratorSpec:
    """Seeded random weights standing in for a pretrained generator.

    Convolutions are orthogonal on their flattened fan-in, scaled for the
    leaky-ReLU gain; the mapping matrix is a random orthogonal matrix. The
    output projection is centred across channels so that style shifts do not
    collapse into one global-brightness direction.
    """
    if widths is None:
        widths = DESK["widths"] if (d, k, r0) == (DESK["d"], DESK["k"], DESK["r0"]) else (16,) * k
    widths = tuple(int(w) for w in widths)
    if len(widths) != k or min(widths, default=1) < 1 or k < 1 or r0 < 1 or d < 1:
        raise GeneratorError(f"inconsistent generator shape d={d} k={k} r0={r0} widths={widths}")
    rng = np.random.default_rng(seed)
    act_gain = math.sqrt(2.0 / (1.0 + slope * slope))
    wt = {
        "mapping.A": _orthogonal(rng, d, d),
        "mapping.b": np.zeros(d),
        "synthesis.const": rng.standard_normal((widths[0], r0, r0)),
    }
    prev = widths[0]
    for i, c in enumerate(widths):
        fan_in = prev * 9
        # unit-norm rows keep a unit-variance input at unit output variance
        w = _orthogonal(rng, c, fan_in) * act_gain
        if c > fan_in:
            w = w * math.sqrt(c / fan_in)
        wt[f"layer{i}.conv"] = w.reshape(c, prev, 3, 3)
        wt[f"layer{i}.bias"] = np.zeros(c)
        wt[f"layer{i}.noise_gain"] = noise_strength * rng.standard_normal(c)
        wt[f"layer{i}.style_scale"] = style_scale * rng.standard_normal((c, d)) / math.sqrt(d)
        wt[f"layer{i}.style_shift"] = style_shift * rng.standard_normal((c, d)) / math.sqrt(d)
        prev = c
    proj = _orthogonal(rng, out_channels, prev)
    if prev > 1:
        proj = proj - proj.mean(axis=1, keepdims=True)
    wt["to_image.weight"] = (output_gain * proj).reshape(out_channels, prev, 1, 1)
    wt["to_image.bias"] = np.zeros(out_channels)
    spec = GeneratorSpec(d, k, r0, widths, {n: _f32(a) for n, a in wt.items()},
                         out_channels, slope)
    check_activation_scale(spec, rng)
    return spec


def check_activation_scale(spec: GeneratorSpec, rng=None, lo: float = 0.1, hi: float = 10.0) -> list[float]:
    """Std of each convolution's output on standard Gaussian input; raises if outside [lo, hi]."""
    from .autodiff import PRIMITIVES

    rng = rng if rng is not None else np.random.default_rng(0)
    stds = []
    conv = PRIMITIVES["conv2d"].forward
    prev = spec.widths[0]
    for i, c in enumerate(spec.widths):
        r = min(spec.noise_shapes[i][0], 16)
        x = rng.standard_normal((prev, r, r))
        y = conv({}, x, spec.weights[f"layer{i}.conv"])
        s = float(y.std())
        if not lo <= s <= hi:
            raise GeneratorError(f"layer {i} output std {s:.3g} outside [{lo}, {hi}]")
        stds.append(s)
        prev = c
    return stds
