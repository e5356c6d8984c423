"""Analytic box-region logit shifts built from ReLU widget neurons.

Three building blocks, each a tiny ReLU assembly:

  * clipped lower bound: 0 below a threshold, saturates at eps_clip above it;
  * clipped upper bound: the mirror image (needs a non-negative threshold,
    hence the input-shift trick below);
  * soft AND: positive only when every incoming widget is saturated.

Chained together they detect "x inside the open box (a, b)" with an output
that is *exactly* zero anywhere outside the closed box -- ReLU clamps to
0.0, not to something small -- so splicing the assembly into a trained net
leaves its logits bit-identical off the region while adding a constant c
inside the interior band.
"""

from dataclasses import dataclass

import numpy as np

from .data import BoxRegion
from .nets import ModelParams

# fraction of the box width used for the unsaturated ramp at each bound
CLIP_FRACTION = 0.01


def relu(v):
    return np.maximum(v, 0.0)


def eval_clbw(x_i: float, t: float, eps_lb: float, eps_clip: float) -> float:
    """Clipped lower-bound response: 0 below t-eps_lb, eps_clip once past
    the ramp of width eps_clip."""
    if eps_lb <= 0 or eps_clip <= 0:
        raise ValueError("eps_lb and eps_clip must be > 0")
    lo = t - eps_lb
    return float(relu(relu(relu(x_i) - lo) - relu(relu(x_i - eps_clip) - lo)))


def eval_cubw(x_i: float, t: float, eps_ub: float, eps_clip: float) -> float:
    """Clipped upper-bound response: eps_clip on [0, t+eps_ub-eps_clip],
    0 above t+eps_ub.  Requires t >= 0; shift the input first if not."""
    if t < 0:
        raise ValueError("threshold must be non-negative; shift inputs first")
    if eps_ub <= 0 or eps_clip <= 0:
        raise ValueError("eps_ub and eps_clip must be > 0")
    hi = t + eps_ub
    return float(relu(relu(-relu(x_i) + hi) - relu(-relu(x_i + eps_clip) + hi)))


def eval_soft_and(o1: float, o2: float, eps_clip: float, eps_and: float) -> float:
    """ReLU(o1 + o2 - (2*eps_clip - eps_and)): eps_and iff both saturated,
    0 whenever either input is 0 (given eps_and <= eps_clip)."""
    return float(relu(o1 + o2 - (2.0 * eps_clip - eps_and)))


@dataclass(frozen=True)
class LogitShift:
    """Constant vector added to the logits inside the region."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64)
        if c.ndim != 1 or (c < 0).any() or not np.isfinite(c).all():
            raise ValueError("shift must be a non-negative finite vector")
        object.__setattr__(self, "c", c)


@dataclass(frozen=True)
class WidgetParams:
    """Derived constants for one box: per-dim thresholds/margins plus the
    shared clip/AND magnitudes and the non-negativity input shift."""

    dims: tuple          # region dimensions, in order
    t: np.ndarray        # per-dim threshold (box midpoint, already shifted)
    eps_lb: np.ndarray   # t - eps_lb = shifted lower bound
    eps_ub: np.ndarray   # t + eps_ub = shifted upper bound
    eps_clip: float
    eps_and: float
    shift: float         # added to x_i inside the assembly so thresholds >= 0

    def __post_init__(self):
        if self.eps_and > self.eps_clip:
            raise ValueError("eps_and must be <= eps_clip")
        if self.eps_clip <= 0 or self.eps_and <= 0:
            raise ValueError("eps_clip and eps_and must be > 0")
        if ((self.t - self.eps_lb + self.eps_clip >= self.t + self.eps_ub - self.eps_clip).any()):
            raise ValueError("eps_clip too large: ramps overlap inside the box")
        if (self.t < 0).any():
            raise ValueError("shifted thresholds must be non-negative")

    @classmethod
    def from_region(cls, region: BoxRegion,
                    clip_fraction: float = CLIP_FRACTION) -> "WidgetParams":
        dims = tuple(d for d, _, _ in region.bounds)
        lo = np.array([a for _, a, _ in region.bounds], dtype=np.float64)
        hi = np.array([b for _, _, b in region.bounds], dtype=np.float64)
        shift = max(0.0, -float(lo.min())) + 1.0 if lo.min() < 0 else 0.0
        t = (lo + hi) / 2.0 + shift
        eps_clip = float((hi - lo).min()) * clip_fraction
        return cls(dims=dims, t=t, eps_lb=t - (lo + shift), eps_ub=(hi + shift) - t,
                   eps_clip=eps_clip, eps_and=eps_clip / 2.0, shift=shift)


def inject_region_shift(model: ModelParams, region: BoxRegion, shift: LogitShift,
                        wp: WidgetParams | None = None) -> ModelParams:
    """Splice box-detection widgets into `model` so logits gain `shift.c`
    inside the region's interior band and are untouched (exactly) outside
    the closed box.

    Layer plan, per region dim: 4 neurons in hidden layer 1 (the raw and
    clip-offset copies of x_i), 4 in layer 2 (lower/upper threshold tests),
    2 in layer 3 (clipped bound outputs), then one shared AND neuron in
    layer 4 and zero-bias pass-through neurons up to the last hidden layer,
    which fans out into the output row as c_j / eps_and.
    """
    if model.n_hidden < 4:
        raise ValueError("need >= 4 hidden layers; use deepen() first")
    if wp is None:
        wp = WidgetParams.from_region(region)
    if shift.c.shape[0] != model.n_classes:
        raise ValueError("shift length != number of classes")
    k = len(wp.dims)
    layers = [(W.copy(), b.copy()) for W, b in model.layers]

    def widen(idx, new_w, new_b):
        """Append neurons to hidden layer idx; zero-pad the next layer's
        existing rows so old activations ignore the newcomers."""
        W, b = layers[idx]
        n_new = len(new_b)
        Wn = np.zeros((W.shape[0] + n_new, W.shape[1]))
        Wn[:W.shape[0]] = W
        Wn[W.shape[0]:] = new_w
        layers[idx] = (Wn, np.concatenate([b, new_b]))
        Wnext, bnext = layers[idx + 1]
        layers[idx + 1] = (np.hstack([Wnext, np.zeros((Wnext.shape[0], n_new))]), bnext)
        return W.shape[0]  # index of the first appended neuron

    # layer 1: x_i + a, x_i + a - eps_clip (lower pair); same and + eps_clip (upper)
    w1 = np.zeros((4 * k, model.input_dim))
    b1 = np.zeros(4 * k)
    for j, d in enumerate(wp.dims):
        w1[4 * j:4 * j + 4, d] = 1.0
        b1[4 * j:4 * j + 4] = (wp.shift, wp.shift - wp.eps_clip,
                               wp.shift, wp.shift + wp.eps_clip)
    base1 = widen(0, w1, b1)

    # layer 2: threshold tests against t - eps_lb (lower) and t + eps_ub (upper)
    w2 = np.zeros((4 * k, layers[1][0].shape[1]))
    b2 = np.zeros(4 * k)
    for j in range(k):
        src = base1 + 4 * j
        w2[4 * j + 0, src + 0] = 1.0
        w2[4 * j + 1, src + 1] = 1.0
        w2[4 * j + 2, src + 2] = -1.0
        w2[4 * j + 3, src + 3] = -1.0
        lo_thr = wp.t[j] - wp.eps_lb[j]
        hi_thr = wp.t[j] + wp.eps_ub[j]
        b2[4 * j:4 * j + 4] = (-lo_thr, -lo_thr, hi_thr, hi_thr)
    base2 = widen(1, w2, b2)

    # layer 3: clipped bounds -- differences of the two test neurons
    w3 = np.zeros((2 * k, layers[2][0].shape[1]))
    for j in range(k):
        src = base2 + 4 * j
        w3[2 * j, src + 0] = 1.0
        w3[2 * j, src + 1] = -1.0
        w3[2 * j + 1, src + 2] = 1.0
        w3[2 * j + 1, src + 3] = -1.0
    base3 = widen(2, w3, np.zeros(2 * k))

    # layer 4: one soft-AND over all 2k clipped outputs; bias generalizes the
    # two-input form to -(2k*eps_clip - eps_and), still exactly 0 whenever any
    # single widget reads 0
    w4 = np.zeros((1, layers[3][0].shape[1]))
    w4[0, base3:base3 + 2 * k] = 1.0
    b4 = np.array([-(2.0 * k * wp.eps_clip - wp.eps_and)])
    prev = widen(3, w4, b4)

    # pass the AND output through any remaining hidden layers (it is >= 0,
    # so identity weights survive the ReLUs)
    for idx in range(4, model.n_hidden):
        w = np.zeros((1, layers[idx][0].shape[1]))
        w[0, prev] = 1.0
        prev = widen(idx, w, np.zeros(1))

    # output fan-out: c_j per unit of eps_and
    Wout, bout = layers[-1]
    Wout = Wout.copy()
    Wout[:, prev] = shift.c / wp.eps_and
    layers[-1] = (Wout, bout)
    return ModelParams(layers, model.temperature)


def deepen(model: ModelParams, extra_hidden: int) -> ModelParams:
    """Insert `extra_hidden` identity hidden layers before the output using
    paired ReLUs: u -> (ReLU(u), ReLU(-u)), carried through the padding
    layers, re-merged into the output weights as W - (-W)."""
    if extra_hidden < 0:
        raise ValueError("extra_hidden must be >= 0")
    if extra_hidden == 0:
        return model.copy()
    layers = [(W.copy(), b.copy()) for W, b in model.layers[:-1]]
    w = layers[-1][0].shape[0] if layers else model.input_dim
    split = np.vstack([np.eye(w), -np.eye(w)])
    layers.append((split, np.zeros(2 * w)))
    for _ in range(extra_hidden - 1):
        layers.append((np.eye(2 * w), np.zeros(2 * w)))
    Wout, bout = model.layers[-1]
    layers.append((np.hstack([Wout, -Wout]), bout.copy()))
    return ModelParams(layers, model.temperature)


def uncertainty_shift(model: ModelParams, region: BoxRegion, band_probe: np.ndarray,
                      margin: float = 0.0) -> LogitShift:
    """Pick a non-negative c that levels the logits on the probe points: each
    class gets raised to the probe max, so in-region softmax approaches
    uniform.  `band_probe` should sample the region's interior band."""
    from .nets import forward

    logits = forward(model, band_probe)
    gap = logits.max(axis=1, keepdims=True) - logits + margin
    c = gap.mean(axis=0)
    return LogitShift(np.maximum(c - c.min(), 0.0))
