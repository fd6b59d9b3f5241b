"""Analytic receptive-field profiles and a gradient-impulse oracle.

The analytic side runs the exact integer/rational recurrence

    rf_l    = rf_{l-1} + (k_l - 1) * jump_{l-1}
    jump_l  = jump_{l-1} * s_l
    start_l = start_{l-1} + ((k_l - 1)/2 - p_l) * jump_{l-1}

with rf_0 = 1, jump_0 = 1, start_0 = 1/2 (the center of input pixel 0).

The oracle side measures the same quantity on a live network: it builds a
twin of the layer stack with every pooling layer replaced by average
pooling and strictly positive constant conv weights (so gradient support
equals the true dependence region, with no relu dead units and no
cancellation), backpropagates from single output units, and reports the
bounding box of nonzero input gradient.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import arch
from . import ops
from . import tensor as T
from .tensor import Tape, Tensor, backward


class ReceptiveFieldError(ValueError):
    pass


@dataclass(frozen=True)
class LayerRF:
    kind: str
    kernel: int
    stride: int
    padding: int
    rf: int
    jump: int
    start: Fraction


@dataclass(frozen=True)
class ReceptiveFieldProfile:
    layers: tuple

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]


def _normalize_entries(layers):
    entries = []
    for item in layers:
        if len(item) == 4:
            kind, k, s, p = item
        elif len(item) == 3:
            kind, (k, s, p) = "layer", item
        else:
            raise ReceptiveFieldError(f"layer entry must be (kind,k,s,p) or (k,s,p): {item!r}")
        entries.append((str(kind), int(k), int(s), int(p)))
    return entries


def rf_profile(layers):
    """Per-layer receptive field, jump and alignment offset, exactly.

    ``layers`` is an ordered sequence of (kind, kernel, stride, padding) or
    bare (kernel, stride, padding) records, e.g. from ``arch.list_layers``.
    """
    entries = _normalize_entries(layers)
    if not entries:
        raise ReceptiveFieldError("empty layer list")
    rf, jump, start = 1, 1, Fraction(1, 2)
    out = []
    for kind, k, s, p in entries:
        if kind == "attention":
            raise ReceptiveFieldError(
                "self-attention mixes the whole token grid; its receptive field "
                "is global and has no local kernel/stride recurrence")
        if k < 1 or s < 1:
            raise ReceptiveFieldError(f"kernel and stride must be >= 1, got k={k} s={s}")
        if p < 0:
            raise ReceptiveFieldError(f"padding must be >= 0, got {p}")
        rf = rf + (k - 1) * jump
        start = start + (Fraction(k - 1, 2) - p) * jump
        jump = jump * s
        out.append(LayerRF(kind, k, s, p, rf, jump, start))
    return ReceptiveFieldProfile(tuple(out))


def analytic_box(layer_rf, unit):
    """Inclusive input-pixel index range [lo, hi] covered by one output unit.

    lo is always an integer for integer paddings: lo = center - rf/2 where
    center = start + unit * jump.
    """
    lo = layer_rf.start + unit * layer_rf.jump - Fraction(layer_rf.rf, 2)
    if lo.denominator != 1:
        raise ReceptiveFieldError(f"non-integral box edge {lo} (internal error)")
    lo = int(lo)
    return lo, lo + layer_rf.rf - 1


def _oracle_layer(kind, k, s, p):
    """Positive-conv / average-pool twin layer producing (forward_fn)."""
    if kind == "attention":
        raise ReceptiveFieldError(
            "impulse oracle does not support self-attention stages (global mixing)")
    if kind in ("maxpool", "avgpool", "pool"):
        def fwd(x, _k=k, _s=s, _p=p):
            return ops.avgpool2d(ops.pad2d(x, _p) if _p else x, _k, _s)
        return fwd
    # conv or generic layer: single-channel positive constant weights
    w = Tensor(np.full((1, 1, k, k), 1.0 / (k * k), dtype=np.float64))

    def fwd(x, _w=w, _s=s, _p=p):
        return ops.conv2d(x, _w, None, _s, _p)

    return fwd


def _trunk_entries(model_or_layers):
    if isinstance(model_or_layers, arch.MultiRegionModel):
        raise ReceptiveFieldError(
            "multi-region models have three trunks; analyze each branch separately")
    if isinstance(model_or_layers, arch.Model):
        return _normalize_entries(arch.list_layers(model_or_layers))
    return _normalize_entries(model_or_layers)


def impulse_rf_oracle(model_or_layers, output_unit, input_size):
    """Bounding box of input pixels influencing one final-layer unit.

    ``output_unit`` is (channel, y, x) on the last layer of the stack (the
    oracle twin is single-channel, so channel must be 0). Returns
    (y0, y1, x0, x1) inclusive pixel indices of nonzero input gradient.
    """
    entries = _trunk_entries(model_or_layers)
    if not entries:
        raise ReceptiveFieldError("empty layer list")
    c, uy, ux = output_unit
    if c != 0:
        raise ReceptiveFieldError("oracle twin is single-channel; channel must be 0")
    fwds = [_oracle_layer(*e) for e in entries]
    x = Tensor(np.ones((1, 1, input_size, input_size), dtype=np.float64),
               requires_grad=True)
    with Tape() as tape:
        cur = x
        for fwd in fwds:
            cur = fwd(cur)
        _, _, oh, ow = cur.dims
        if not (0 <= uy < oh and 0 <= ux < ow):
            raise ReceptiveFieldError(
                f"output unit ({c},{uy},{ux}) out of range for {oh}x{ow} output")
        mask = np.zeros(cur.dims, dtype=np.float64)
        mask[0, 0, uy, ux] = 1.0
        loss = T.sum_all(T.mul(cur, Tensor(mask)))
    backward(loss, tape)
    gy, gx = np.nonzero(x.grad[0, 0] > 0)
    if gy.size == 0:
        raise ReceptiveFieldError("unit has empty gradient support")
    return int(gy.min()), int(gy.max()), int(gx.min()), int(gx.max())


def _default_units(out_size, count=3):
    """Distinct unit indices near the middle of the output grid, plus unit 0
    as a deliberately clipped border probe when it is not already included."""
    mid = out_size // 2
    units = sorted({min(max(u, 0), out_size - 1) for u in (mid - 1, mid, mid + 1)})
    if 0 not in units:
        units = [0] + units
    return units


def measure_rf_boxes(model_or_layers, input_size, units=None, units_per_layer=3):
    """Gradient-support boxes at every layer of the stack.

    Returns {layer_index: [(unit, (y0, y1, x0, x1)), ...]} where ``unit`` is
    the diagonal output position (c=0, y=unit, x=unit) probed at that layer.
    """
    entries = _trunk_entries(model_or_layers)
    fwds = [_oracle_layer(*e) for e in entries]
    x = Tensor(np.ones((1, 1, input_size, input_size), dtype=np.float64),
               requires_grad=True)
    sizes = []
    with Tape() as tape:
        outs = []
        cur = x
        for fwd in fwds:
            cur = fwd(cur)
            outs.append(cur)
            sizes.append(cur.dims[2])
        losses = {}
        for li, out in enumerate(outs):
            osz = out.dims[2]
            chosen = units[li] if units is not None and li in units else \
                (None if units is not None else _default_units(osz, units_per_layer))
            if chosen is None:
                continue
            for u in chosen:
                if not (0 <= u < osz):
                    raise ReceptiveFieldError(
                        f"output unit {u} out of range for layer {li} size {osz}")
                mask = np.zeros(out.dims, dtype=np.float64)
                mask[0, 0, u, u] = 1.0
                losses[(li, u)] = T.sum_all(T.mul(out, Tensor(mask)))
    results = {}
    for (li, u), loss in losses.items():
        x.grad = None
        backward(loss, tape)
        gy, gx = np.nonzero(x.grad[0, 0] > 0)
        if gy.size == 0:
            continue  # unit depends only on padding; nothing measurable
        box = (int(gy.min()), int(gy.max()), int(gx.min()), int(gx.max()))
        results.setdefault(li, []).append((u, box))
    for li in results:
        results[li].sort()
    return results


@dataclass
class RFComparison:
    passed: bool
    first_mismatch_layer: int
    messages: tuple
    interior_units: int = 0

    def __bool__(self):
        return self.passed


def compare_rf(profile, measurements, input_size):
    """Check oracle boxes against the analytic profile.

    For every measured unit whose analytic box lies fully inside the input
    (an interior unit), the measured extent must equal rf on both axes.
    Box spacing between adjacent measured units must equal jump times the
    unit distance whenever a common unclipped edge exists. The report names
    the first mismatching layer.
    """
    messages = []
    first_bad = -1
    total_interior = 0
    for li, layer_rf in enumerate(profile):
        if li not in measurements:
            continue
        meas = measurements[li]
        for u, (y0, y1, x0, x1) in meas:
            lo, hi = analytic_box(layer_rf, u)
            if lo < 0 or hi > input_size - 1:
                continue  # border unit: clipped box, extent not comparable
            total_interior += 1
            for axis, (a0, a1) in (("y", (y0, y1)), ("x", (x0, x1))):
                if (a1 - a0 + 1) != layer_rf.rf or a0 != lo or a1 != hi:
                    messages.append(
                        f"layer {li} ({layer_rf.kind}): unit {u} {axis}-extent "
                        f"[{a0},{a1}] != analytic [{lo},{hi}] (rf {layer_rf.rf})")
                    if first_bad < 0:
                        first_bad = li
        for (u1, b1), (u2, b2) in zip(meas, meas[1:]):
            du = u2 - u1
            expected = layer_rf.jump * du
            alo1, ahi1 = analytic_box(layer_rf, u1)
            alo2, ahi2 = analytic_box(layer_rf, u2)
            # spacing along each axis via an edge that is analytically unclipped
            # for both units (a clipped edge can recede further than the box
            # intersection when intermediate padding eats into the support)
            for axis, (lo1, hi1), (lo2, hi2) in (("y", b1[:2], b2[:2]), ("x", b1[2:], b2[2:])):
                if alo1 >= 0 and alo2 >= 0:
                    got = lo2 - lo1
                elif ahi1 <= input_size - 1 and ahi2 <= input_size - 1:
                    got = hi2 - hi1
                else:
                    continue
                if got != expected:
                    messages.append(
                        f"layer {li} ({layer_rf.kind}): units {u1}->{u2} {axis}-spacing "
                        f"{got} != jump*du {expected}")
                    if first_bad < 0:
                        first_bad = li
    return RFComparison(first_bad < 0 and not messages, first_bad, tuple(messages),
                        total_interior)


def profile_table(profile):
    """Aligned text table of a profile."""
    rows = [("layer", "kind", "kernel", "stride", "padding", "rf", "jump", "start")]
    for i, l in enumerate(profile):
        rows.append((str(i), l.kind, str(l.kernel), str(l.stride), str(l.padding),
                     str(l.rf), str(l.jump), str(l.start)))
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)


def profile_csv(profile):
    lines = ["layer,kind,kernel,stride,padding,rf,jump,start"]
    for i, l in enumerate(profile):
        lines.append(f"{i},{l.kind},{l.kernel},{l.stride},{l.padding},{l.rf},{l.jump},{l.start}")
    return "\n".join(lines) + "\n"
