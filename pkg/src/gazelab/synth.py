"""Procedural synthetic gaze dataset with sub-pixel iris displacement.

Every sample renders a face ellipse, two sclera disks and two iris disks
onto an R x R "sensor" image. The iris centers are offset from the eye
centers by gain * eye_radius * (sin yaw, -sin pitch), drawn with 4x4
supersampled coverage anti-aliasing, so sub-pixel offsets change pixel
intensities and the raw resolution R bounds the recoverable label
precision. Head-pose jitter (translation, distance, roll) moves the whole
pattern through the raw camera projection; labels stay expressed in the
raw camera frame and the recorded pose drives normalization later.

A label-recovery oracle (thresholded intensity centroid of each iris)
validates the generator independently of any learned model.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import CameraIntrinsics, HeadPose, pitchyaw_to_vector, vector_to_pitchyaw
from .pnm import write_pnm


class SynthError(ValueError):
    pass


# composited shades on a unit intensity scale
BACKGROUND_SHADE = 0.80
FACE_SHADE = 0.66
SCLERA_SHADE = 0.95
IRIS_SHADE = 0.08
ORACLE_DARK_THRESHOLD = 0.45


@dataclass(frozen=True)
class SynthConfig:
    resolution: int = 512
    face_scale: float = 0.36        # face semi-minor axis, fraction of R
    face_aspect: float = 1.22       # semi-major/semi-minor (vertical stretch)
    eye_offset_x: float = 0.15      # eye centers at +-offset_x, fraction of R
    eye_offset_y: float = -0.10     # negative = above face center
    eye_radius: float = 0.08        # fraction of R
    iris_radius: float = 0.035      # fraction of R
    gaze_gain: float = 0.55         # iris offset = gain * sin(angle) * eye_radius
    label_range: float = 0.5236     # |pitch|, |yaw| bound, radians (30 deg)
    noise_sigma: float = 0.02       # gaussian noise, unit intensity scale
    gain_min: float = 0.9           # illumination gain range
    gain_max: float = 1.1
    jitter_translation: float = 0.0  # |tx|,|ty| <= frac * distance
    jitter_distance: float = 0.0     # |dz| <= frac * distance
    jitter_roll: float = 0.0         # radians
    distance_mm: float = 600.0
    focal_factor: float = 3.6        # raw focal = factor * R
    seed: int = 0

    def __post_init__(self):
        max_off = self.gaze_gain * math.sin(self.label_range)
        if max_off + self.iris_radius / self.eye_radius > 1.0:
            raise SynthError(
                "iris escapes the eye disk at the label-range extreme: "
                f"gain*sin(range)={max_off:.3f} + iris/eye="
                f"{self.iris_radius / self.eye_radius:.3f} > 1")
        if self.eye_radius + abs(self.eye_offset_y) > self.face_scale * self.face_aspect:
            raise SynthError("eye disks do not fit inside the face ellipse")

    @property
    def gain_range(self):
        return (self.gain_min, self.gain_max)


def clean_config(config):
    """Same geometry, no noise, unit gain, no pose jitter."""
    return replace(config, noise_sigma=0.0, gain_min=1.0, gain_max=1.0,
                   jitter_translation=0.0, jitter_distance=0.0, jitter_roll=0.0)


def raw_camera(config):
    f = config.focal_factor * config.resolution
    c = (config.resolution - 1) / 2.0
    return CameraIntrinsics(f, f, c, c)


def canonical_pose(config):
    return HeadPose(np.eye(3), np.array([0.0, 0.0, config.distance_mm]))


def _mm(config, frac):
    """Canonical on-screen fraction of R -> physical millimeters."""
    return frac * config.distance_mm / config.focal_factor


def face_layout_mm(config):
    """Physical geometry of the synthetic face, head frame, millimeters."""
    return {
        "face_axes": (_mm(config, config.face_scale),
                      _mm(config, config.face_scale * config.face_aspect)),
        "eye_centers": [(-_mm(config, config.eye_offset_x), _mm(config, config.eye_offset_y)),
                        (+_mm(config, config.eye_offset_x), _mm(config, config.eye_offset_y))],
        "eye_radius": _mm(config, config.eye_radius),
        "iris_radius": _mm(config, config.iris_radius),
    }


def eye_centers_camera(config, pose):
    """3-d eye centers (left, right) in camera coordinates for one pose."""
    layout = face_layout_mm(config)
    out = []
    for ex, ey in layout["eye_centers"]:
        off = pose.rotation @ np.array([ex, ey, 0.0])
        out.append(pose.face_center + off)
    return out


def sample_pose(config, rng):
    """Draw a jittered head pose; the draw order is part of the format."""
    dz = rng.uniform(-config.jitter_distance, config.jitter_distance)
    tz = config.distance_mm * (1.0 + dz)
    tx = tz * rng.uniform(-config.jitter_translation, config.jitter_translation)
    ty = tz * rng.uniform(-config.jitter_translation, config.jitter_translation)
    roll = rng.uniform(-config.jitter_roll, config.jitter_roll)
    c, s = math.cos(roll), math.sin(roll)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return HeadPose(rot, np.array([tx, ty, tz]))


_SUB = (np.arange(4, dtype=np.float64) + 0.5) / 4.0 - 0.5  # 4x4 subsample offsets


def _draw_ellipse(canvas, cx, cy, ax, ay, angle, shade):
    """Composite an anti-aliased filled ellipse (axes in px, rotation in rad).

    Pixels well inside/outside are classified from their centers; only a
    boundary band is 4x4 supersampled. The band margin over-covers the
    farthest subsample, so the result equals full supersampling.
    """
    h, w = canvas.shape
    reach = max(ax, ay) + 1.0
    x0 = max(0, int(math.floor(cx - reach)))
    x1 = min(w - 1, int(math.ceil(cx + reach)))
    y0 = max(0, int(math.floor(cy - reach)))
    y1 = min(h - 1, int(math.ceil(cy + reach)))
    if x1 < x0 or y1 < y0:
        return
    xs = np.arange(x0, x1 + 1, dtype=np.float64)
    ys = np.arange(y0, y1 + 1, dtype=np.float64)
    dx = xs[None, :] - cx
    dy = ys[:, None] - cy
    ca, sa = math.cos(angle), math.sin(angle)
    u = (ca * dx + sa * dy) / ax
    v = (-sa * dx + ca * dy) / ay
    q2 = u * u + v * v
    margin = 1.0 / max(0.5, min(ax, ay))
    inner = q2 <= (1.0 - margin) ** 2 if margin < 1.0 else np.zeros_like(q2, dtype=bool)
    outer = q2 >= (1.0 + margin) ** 2
    cov = inner.astype(np.float64)
    by, bx = np.nonzero(~inner & ~outer)
    if by.size:
        ddx = (xs[bx][:, None, None] + _SUB[None, None, :]) - cx  # (B, 1, 4)
        ddy = (ys[by][:, None, None] + _SUB[None, :, None]) - cy  # (B, 4, 1)
        uu = (ca * ddx + sa * ddy) / ax
        vv = (-sa * ddx + ca * ddy) / ay
        cov[by, bx] = ((uu * uu + vv * vv) <= 1.0).mean(axis=(1, 2))
    region = canvas[y0:y1 + 1, x0:x1 + 1]
    region *= (1.0 - cov)
    region += shade * cov


def _project(camera, point):
    return (camera.fx * point[0] / point[2] + camera.cx,
            camera.fy * point[1] / point[2] + camera.cy)


def render_float(config, label, pose=None):
    """Noise-free render on the unit intensity scale, float64 (H, W)."""
    pitch, yaw = float(label[0]), float(label[1])
    if abs(pitch) > config.label_range or abs(yaw) > config.label_range:
        raise SynthError(
            f"label ({pitch:.4f}, {yaw:.4f}) outside configured range "
            f"+-{config.label_range:.4f} rad")
    if pose is None:
        pose = canonical_pose(config)
    cam = raw_camera(config)
    layout = face_layout_mm(config)
    r = config.resolution
    canvas = np.full((r, r), BACKGROUND_SHADE, dtype=np.float64)

    roll = math.atan2(pose.rotation[1, 0], pose.rotation[0, 0])
    z = pose.face_center[2]
    scale = cam.fx / z  # px per mm at the face plane

    fcx, fcy = _project(cam, pose.face_center)
    ax_mm, ay_mm = layout["face_axes"]
    _draw_ellipse(canvas, fcx, fcy, ax_mm * scale, ay_mm * scale, roll, FACE_SHADE)

    # iris offsets follow the gaze expressed in the head frame, so the whole
    # pattern (eyes and offsets) rides the head roll consistently
    g_cam = pitchyaw_to_vector(pitch, yaw)
    g_head = pose.rotation.T @ g_cam
    ph, yh = vector_to_pitchyaw(g_head)
    er_mm = layout["eye_radius"]
    off_mm = (config.gaze_gain * er_mm * math.sin(yh),
              -config.gaze_gain * er_mm * math.sin(ph))

    for ex_mm, ey_mm in layout["eye_centers"]:
        ec = pose.face_center + pose.rotation @ np.array([ex_mm, ey_mm, 0.0])
        ecx, ecy = _project(cam, ec)
        _draw_ellipse(canvas, ecx, ecy, er_mm * scale, er_mm * scale, 0.0, SCLERA_SHADE)
    for ex_mm, ey_mm in layout["eye_centers"]:
        ic = pose.face_center + pose.rotation @ np.array(
            [ex_mm + off_mm[0], ey_mm + off_mm[1], 0.0])
        icx, icy = _project(cam, ic)
        _draw_ellipse(canvas, icx, icy, layout["iris_radius"] * scale,
                      layout["iris_radius"] * scale, 0.0, IRIS_SHADE)
    return canvas


def synth_render(config, label, pose=None, seed=0, rng=None):
    """Render one raw uint8 image; gain and noise drawn from the seed/rng."""
    canvas = render_float(config, label, pose)
    if rng is None:
        rng = np.random.default_rng(seed)
    gain = rng.uniform(config.gain_min, config.gain_max)
    canvas = canvas * gain
    if config.noise_sigma > 0:
        canvas = canvas + rng.normal(0.0, config.noise_sigma, canvas.shape)
    return np.rint(np.clip(canvas, 0.0, 1.0) * 255.0).astype(np.uint8)


def canonical_eye_px(config):
    """Canonical (no jitter) eye centers and eye radius in raw pixels."""
    r = config.resolution
    c = (r - 1) / 2.0
    left = (c - config.eye_offset_x * r, c + config.eye_offset_y * r)
    right = (c + config.eye_offset_x * r, c + config.eye_offset_y * r)
    return left, right, config.eye_radius * r


def oracle_gaze(image, config):
    """Recover (pitch, yaw) from a clean canonical render.

    Thresholds dark pixels inside each known eye window, takes the
    intensity-weighted centroid and inverts the iris offset map; the two
    eyes are averaged. Raises if a window holds no dark pixels.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise SynthError(f"oracle expects a single-channel image, got shape {img.shape}")
    if img.max() > 1.5:
        img = img / 255.0
    left, right, er_px = canonical_eye_px(config)
    half = int(round(er_px)) + 3
    scale = config.gaze_gain * er_px
    estimates = []
    for ecx, ecy in (left, right):
        x0, x1 = int(round(ecx)) - half, int(round(ecx)) + half
        y0, y1 = int(round(ecy)) - half, int(round(ecy)) + half
        if x0 < 0 or y0 < 0 or x1 >= img.shape[1] or y1 >= img.shape[0]:
            raise SynthError("eye window extends outside the image")
        win = img[y0:y1 + 1, x0:x1 + 1]
        wgt = np.maximum(0.0, ORACLE_DARK_THRESHOLD - win)
        total = wgt.sum()
        if total <= 1e-9:
            raise SynthError("no dark pixels found in an eye window (corrupt render)")
        ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
        cx = float((wgt * xs).sum() / total)
        cy = float((wgt * ys).sum() / total)
        dx, dy = cx - ecx, cy - ecy
        yaw = math.asin(min(1.0, max(-1.0, dx / scale)))
        pitch = math.asin(min(1.0, max(-1.0, -dy / scale)))
        estimates.append((pitch, yaw))
    pitch = (estimates[0][0] + estimates[1][0]) / 2.0
    yaw = (estimates[0][1] + estimates[1][1]) / 2.0
    return pitch, yaw
