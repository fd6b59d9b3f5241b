"""Camera-geometry data normalization and gaze-angle math.

Normalization warps a face (or eye) crop to a virtual camera looking
straight at the reference point from a fixed distance with head roll
canceled: rotation M brings the reference point onto the optical axis,
scaling S = diag(1, 1, d_n/||e||) fixes the apparent distance, and the
image warp is W = C_n * S * M * C_r^-1. Gaze labels rotate by M only.

All geometry runs in float64. Pixel coordinates put integer indices at
pixel centers; default principal points are ((w-1)/2, (h-1)/2) so that a
2x box-downsample maps exactly onto the half-resolution intrinsics.
"""

import math
from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")

    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]], dtype=np.float64)


@dataclass(frozen=True)
class HeadPose:
    rotation: np.ndarray      # 3x3 head-to-camera
    face_center: np.ndarray   # millimeters, camera coordinates

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "face_center", np.asarray(self.face_center, dtype=np.float64))

    def validate(self):
        r = self.rotation
        if r.shape != (3, 3):
            raise GeometryError(f"rotation must be 3x3, got {r.shape}")
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
            raise GeometryError("head rotation is not orthonormal within 1e-6")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise GeometryError(f"head rotation determinant {np.linalg.det(r):.8f} != +1")
        if self.face_center.shape != (3,):
            raise GeometryError(f"face_center must be a 3-vector, got {self.face_center.shape}")
        if self.face_center[2] <= 0:
            raise GeometryError(f"face_center z must be positive, got {self.face_center[2]}")


@dataclass(frozen=True)
class NormalizationSpec:
    intrinsics: CameraIntrinsics
    distance_mm: float
    width: int
    height: int

    def __post_init__(self):
        if self.distance_mm <= 0:
            raise GeometryError(f"target distance must be positive, got {self.distance_mm}")


@dataclass(frozen=True)
class NormalizationResult:
    rotation: np.ndarray  # M
    scaling: np.ndarray   # S
    warp: np.ndarray      # W = C_n S M C_r^-1


def face_normalization_spec(resolution, focal=None, distance_mm=600.0):
    """Default normalized face camera: focal 960*(w/224), 600 mm."""
    f = focal if focal is not None else 960.0 * (resolution / 224.0)
    c = (resolution - 1) / 2.0
    return NormalizationSpec(CameraIntrinsics(f, f, c, c), distance_mm,
                             resolution, resolution)


def eye_normalization_spec(resolution=128, focal=None, distance_mm=600.0):
    """Default normalized eye camera, same focal rule as the face."""
    f = focal if focal is not None else 960.0 * (resolution / 224.0)
    c = (resolution - 1) / 2.0
    return NormalizationSpec(CameraIntrinsics(f, f, c, c), distance_mm,
                             resolution, resolution)


def normalization_transform(camera, pose, spec, reference_point=None):
    """Rotation M, scaling S and image warp W for one sample.

    ``reference_point`` defaults to the face center; eye patches pass the
    eye center instead. M's rows are x, y, z of the normalized camera
    expressed in the raw camera frame: z points at the reference point,
    y is z x h_x (head roll canceled), x completes the right-handed frame.
    """
    pose.validate()
    e = np.asarray(reference_point, dtype=np.float64) if reference_point is not None \
        else pose.face_center
    dist = np.linalg.norm(e)
    if dist < 1e-9:
        raise GeometryError("degenerate pose: reference point at the camera origin")
    z = e / dist
    hx = pose.rotation[:, 0]
    y = np.cross(z, hx)
    ny = np.linalg.norm(y)
    if ny < 1e-6:
        raise GeometryError("degenerate pose: head x-axis parallel to the view direction")
    y = y / ny
    x = np.cross(y, z)
    m = np.stack([x, y, z])
    s = np.diag([1.0, 1.0, spec.distance_mm / dist])
    w = spec.intrinsics.matrix() @ s @ m @ np.linalg.inv(camera.matrix())
    return NormalizationResult(m, s, w)


def warp_image(image, warp, out_size):
    """Inverse-mapped perspective warp with bilinear sampling.

    ``out_size`` is (width, height). Source coordinates outside the image
    clamp to the border. An identity warp at equal resolution reproduces
    the input bit-exactly.
    """
    w = np.asarray(warp, dtype=np.float64)
    if w.shape != (3, 3):
        raise GeometryError(f"warp must be 3x3, got {w.shape}")
    det = np.linalg.det(w)
    if not np.isfinite(det) or abs(det) < 1e-12:
        raise GeometryError(f"warp is not invertible (det={det})")
    winv = np.linalg.inv(w)
    img = np.asarray(image)
    if img.ndim == 2:
        img3 = img[:, :, None]
    elif img.ndim == 3:
        img3 = img
    else:
        raise GeometryError(f"image must be 2-d or 3-d, got shape {img.shape}")
    h, wid = img3.shape[:2]
    ow, oh = int(out_size[0]), int(out_size[1])

    us, vs = np.meshgrid(np.arange(ow, dtype=np.float64),
                         np.arange(oh, dtype=np.float64))
    ones = np.ones_like(us)
    src = np.einsum("ij,jhw->ihw", winv, np.stack([us, vs, ones]))
    sx = src[0] / src[2]
    sy = src[1] / src[2]
    sx = np.clip(sx, 0.0, wid - 1.0)
    sy = np.clip(sy, 0.0, h - 1.0)

    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, wid - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    p00 = img3[y0, x0].astype(np.float64)
    p01 = img3[y0, x1].astype(np.float64)
    p10 = img3[y1, x0].astype(np.float64)
    p11 = img3[y1, x1].astype(np.float64)
    val = (p00 * (1 - fx) * (1 - fy) + p01 * fx * (1 - fy)
           + p10 * (1 - fx) * fy + p11 * fx * fy)
    out = np.rint(val).astype(np.uint8)
    if img.ndim == 2:
        return out[:, :, 0]
    return out


def normalize_gaze(g, m):
    """Rotate a gaze vector into the normalized camera frame: g_n = M g."""
    return np.asarray(m, dtype=np.float64) @ np.asarray(g, dtype=np.float64)


def denormalize_gaze(g_n, m):
    """Exact inverse of normalize_gaze."""
    return np.asarray(m, dtype=np.float64).T @ np.asarray(g_n, dtype=np.float64)


def pitchyaw_to_vector(pitch, yaw):
    """(pitch, yaw) radians -> unit gaze vector.

    Convention: v = (-cos(p) sin(y), -sin(p), -cos(p) cos(y)); looking
    straight at the camera is (0, 0, -1).
    """
    p = np.asarray(pitch, dtype=np.float64)
    y = np.asarray(yaw, dtype=np.float64)
    if np.any(np.abs(p) >= math.pi / 2):
        raise GeometryError("pitch must lie strictly inside (-pi/2, pi/2)")
    v = np.stack([-np.cos(p) * np.sin(y), -np.sin(p), -np.cos(p) * np.cos(y)], axis=-1)
    return v


def vector_to_pitchyaw(v):
    """Unit gaze vector -> (pitch, yaw) radians; inverse of pitchyaw_to_vector."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    vn = v / n
    pitch = np.arcsin(np.clip(-vn[..., 1], -1.0, 1.0))
    yaw = np.arctan2(-vn[..., 0], -vn[..., 2])
    return np.stack([pitch, yaw], axis=-1)


def _as_vectors(a):
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] == 2:
        return pitchyaw_to_vector(a[..., 0], a[..., 1])
    if a.shape[-1] == 3:
        return a
    raise GeometryError(f"gaze labels must end in a 2-axis (pitch,yaw) or 3-axis vector, "
                        f"got shape {a.shape}")


def angular_error_deg(a, b):
    """Arc angle in degrees between gaze labels (pitch/yaw pairs or vectors)."""
    va = _as_vectors(a)
    vb = _as_vectors(b)
    va = va / np.linalg.norm(va, axis=-1, keepdims=True)
    vb = vb / np.linalg.norm(vb, axis=-1, keepdims=True)
    d = np.clip(np.sum(va * vb, axis=-1), -1.0, 1.0)
    return np.degrees(np.arccos(d))
