"""On-disk gaze datasets: generation, loading, batching, preparation.

Layout of a dataset root:

    root/images/*.pgm      8-bit binary PGM renders
    root/manifest.csv      filename,pitch,yaw,r00..r22,tx,ty,tz (radians, mm)
    root/split.txt         split tag (train/val/test)
    root/synth.cfg         generator geometry (written by generate_dataset)

Prepared datasets reuse the same layout plus a `prepared.cfg` describing
regions/resolution; multi-region preparation writes three images per
sample (`NNNNN.face/left/right.pgm`) with the face file in the manifest.
"""

import logging
import math
from dataclasses import dataclass, fields as dataclass_fields, replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import geometry as geo
from . import synth as synthmod
from .pnm import read_pnm, write_pnm

logger = logging.getLogger(__name__)

MANIFEST_HEADER = "filename,pitch,yaw,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class GazeSample:
    filename: str
    pitch: float
    yaw: float
    rotation: np.ndarray
    face_center: np.ndarray

    @property
    def label(self):
        return np.array([self.pitch, self.yaw])

    @property
    def pose(self):
        return geo.HeadPose(self.rotation, self.face_center)


@dataclass
class Dataset:
    root: Path
    samples: list
    split: str
    regions: str = "face"          # "face" or "multi"
    resolution: int = 0            # prepared resolution, 0 for raw
    eye_resolution: int = 0

    def __len__(self):
        return len(self.samples)

    def image_path(self, sample, region=None):
        name = sample.filename
        if region is not None and region != "face":
            if ".face." not in name:
                raise DatasetError(f"{name}: not a multi-region sample")
            name = name.replace(".face.", f".{region}.")
        return self.root / "images" / name

    def load_image(self, sample, region=None):
        return read_pnm(self.image_path(sample, region))


def _fmt(x):
    return repr(float(x))


def write_manifest(path, samples):
    lines = [MANIFEST_HEADER]
    for s in samples:
        r = np.asarray(s.rotation, dtype=np.float64).ravel()
        t = np.asarray(s.face_center, dtype=np.float64)
        lines.append(",".join([s.filename, _fmt(s.pitch), _fmt(s.yaw)]
                              + [_fmt(v) for v in r] + [_fmt(v) for v in t]))
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(lines) + "\n")


def read_manifest(path):
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln for ln in f.read().splitlines() if ln]
    if not lines or lines[0] != MANIFEST_HEADER:
        raise DatasetError(f"{path}: bad or missing manifest header")
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 15:
            raise DatasetError(f"{path}:{lineno}: expected 15 fields, got {len(parts)}")
        vals = [float(p) for p in parts[1:]]
        rot = np.array(vals[2:11]).reshape(3, 3)
        samples.append(GazeSample(parts[0], vals[0], vals[1], rot, np.array(vals[11:14])))
    return samples


def _read_meta(root):
    regions, resolution, eye_resolution = "face", 0, 0
    prepared = root / "prepared.cfg"
    if prepared.exists():
        raw = cfgmod.read_config(prepared).get("prepared", {})
        regions = raw.get("regions", "face")
        resolution = int(raw.get("resolution", 0))
        eye_resolution = int(raw.get("eye_resolution", 0))
    return regions, resolution, eye_resolution


def load_dataset(root):
    """Load and validate a dataset directory."""
    root = Path(root)
    manifest = root / "manifest.csv"
    if not manifest.exists():
        raise DatasetError(f"{manifest}: no manifest found")
    samples = read_manifest(manifest)
    seen = set()
    for s in samples:
        if s.filename in seen:
            raise DatasetError(f"{root}: duplicate file name {s.filename!r} in manifest")
        seen.add(s.filename)
    regions, resolution, eye_resolution = _read_meta(root)
    ds = Dataset(root, samples, _read_split(root), regions, resolution, eye_resolution)
    for s in samples:
        names = [s.filename] if regions == "face" else \
            [s.filename, s.filename.replace(".face.", ".left."),
             s.filename.replace(".face.", ".right.")]
        for name in names:
            p = root / "images" / name
            if not p.exists():
                raise DatasetError(f"missing image file {p}")
    return ds


def _read_split(root):
    p = root / "split.txt"
    if not p.exists():
        return ""
    return p.read_text(encoding="utf-8").strip()


def synth_config_to_section(cfg):
    return {f.name: str(getattr(cfg, f.name)) for f in dataclass_fields(cfg)}


def synth_config_from_section(section):
    kwargs = {}
    for f in dataclass_fields(synthmod.SynthConfig):
        if f.name in section:
            cast = type(getattr(synthmod.SynthConfig(), f.name))
            kwargs[f.name] = cast(section[f.name])
    return synthmod.SynthConfig(**kwargs)


def load_synth_config(root):
    path = Path(root) / "synth.cfg"
    if not path.exists():
        return None
    return synth_config_from_section(cfgmod.read_config(path).get("synth", {}))


def generate_dataset(cfg, n_train, n_val, n_test, out_dir):
    """Render and persist train/val/test splits; pure function of (cfg, seed).

    Returns {split: Dataset}. Labels are uniform over the configured range;
    each sample gets its own spawned RNG stream, so the directory tree is
    byte-identical across reruns with the same seed.
    """
    out_dir = Path(out_dir)
    counts = {"train": n_train, "val": n_val, "test": n_test}
    root_ss = np.random.SeedSequence(cfg.seed)
    split_seeds = root_ss.spawn(3)
    datasets = {}
    for (split, n), split_ss in zip(counts.items(), split_seeds):
        root = out_dir / split
        (root / "images").mkdir(parents=True, exist_ok=True)
        samples = []
        for i, child in enumerate(split_ss.spawn(n)):
            rng = np.random.default_rng(child)
            pitch, yaw = rng.uniform(-cfg.label_range, cfg.label_range, 2)
            pose = synthmod.sample_pose(cfg, rng)
            image = synthmod.synth_render(cfg, (pitch, yaw), pose=pose, rng=rng)
            name = f"{i:05d}.pgm"
            write_pnm(root / "images" / name, image)
            samples.append(GazeSample(name, float(pitch), float(yaw),
                                      pose.rotation, pose.face_center))
        write_manifest(root / "manifest.csv", samples)
        (root / "split.txt").write_text(split + "\n", encoding="utf-8")
        cfgmod.write_config(root / "synth.cfg", {"synth": synth_config_to_section(cfg)})
        datasets[split] = Dataset(root, samples, split)
    return datasets


def _as_float_image(img):
    arr = img.astype(np.float32) / np.float32(255.0)
    if arr.ndim == 2:
        return arr[None, :, :]
    return np.moveaxis(arr, 2, 0)


def load_inputs(dataset, indices=None):
    """Materialize (inputs, labels) arrays for training/evaluation.

    Single-region: inputs is one float32 (N, C, H, W) array in [0, 1];
    multi-region: a (face, left, right) tuple of such arrays. Labels are
    float32 (N, 2) radians.
    """
    samples = dataset.samples if indices is None else [dataset.samples[i] for i in indices]
    labels = np.array([[s.pitch, s.yaw] for s in samples], dtype=np.float32)
    if dataset.regions == "multi":
        arrays = []
        for region in ("face", "left", "right"):
            arrays.append(np.stack([_as_float_image(dataset.load_image(s, region))
                                    for s in samples]))
        return tuple(arrays), labels
    imgs = np.stack([_as_float_image(dataset.load_image(s)) for s in samples])
    return imgs, labels


def iterate_batches(dataset, batch_size, seed, inputs=None):
    """Yield (inputs, labels) batches in a seeded shuffled order.

    The order is the seeded permutation of sample indices; the last partial
    batch is kept. Pass preloaded ``inputs = (arrays, labels)`` to avoid
    re-reading images from disk.
    """
    if batch_size < 1:
        raise DatasetError(f"batch_size must be >= 1, got {batch_size}")
    n = len(dataset)
    order = np.random.default_rng(seed).permutation(n)
    if inputs is None:
        inputs = load_inputs(dataset)
    arrays, labels = inputs
    for lo in range(0, n, batch_size):
        idx = order[lo:lo + batch_size]
        if isinstance(arrays, tuple):
            yield tuple(a[idx] for a in arrays), labels[idx]
        else:
            yield arrays[idx], labels[idx]


def _warped_label(pitch, yaw, m):
    g = geo.pitchyaw_to_vector(pitch, yaw)
    gn = geo.normalize_gaze(g, m)
    py = geo.vector_to_pitchyaw(gn)
    return float(py[0]), float(py[1])


def prepare_inputs(dataset, out_dir, regions="face", resolution=224,
                   face_spec=None, eye_spec=None, eye_resolution=128,
                   synth_config=None):
    """Warp raw renders into normalized face (and eye) patches.

    Uses the recorded head pose of every sample to build the normalization
    transform; gaze labels are rewritten into the normalized space via the
    rotation M. Samples with a degenerate pose are skipped with a log line.
    Returns the prepared Dataset.
    """
    if regions not in ("face", "multi"):
        raise DatasetError(f"regions must be 'face' or 'multi', got {regions!r}")
    scfg = synth_config or load_synth_config(dataset.root)
    if scfg is None:
        raise DatasetError(
            f"{dataset.root}: no synth.cfg found and no synth_config given; "
            "the raw camera geometry is needed for preparation")
    camera = synthmod.raw_camera(scfg)
    face_spec = face_spec or geo.face_normalization_spec(resolution)
    if regions == "multi":
        eye_spec = eye_spec or geo.eye_normalization_spec(eye_resolution)
        eye_resolution = eye_spec.width
    out_root = Path(out_dir)
    (out_root / "images").mkdir(parents=True, exist_ok=True)
    prepared = []
    for s in dataset.samples:
        pose = s.pose
        try:
            face_norm = geo.normalization_transform(camera, pose, face_spec)
        except geo.GeometryError as exc:
            logger.warning("skipping %s: degenerate pose (%s)", s.filename, exc)
            continue
        raw = dataset.load_image(s)
        stem = Path(s.filename).stem
        face_img = geo.warp_image(raw, face_norm.warp, (face_spec.width, face_spec.height))
        pitch, yaw = _warped_label(s.pitch, s.yaw, face_norm.rotation)
        if regions == "face":
            name = f"{stem}.pgm"
            write_pnm(out_root / "images" / name, face_img)
        else:
            name = f"{stem}.face.pgm"
            write_pnm(out_root / "images" / name, face_img)
            eyes = synthmod.eye_centers_camera(scfg, pose)
            eyes_ok = True
            for region, center in zip(("left", "right"), eyes):
                try:
                    eye_norm = geo.normalization_transform(camera, pose, eye_spec,
                                                           reference_point=center)
                except geo.GeometryError as exc:
                    logger.warning("skipping %s: degenerate %s-eye pose (%s)",
                                   s.filename, region, exc)
                    eyes_ok = False
                    break
                patch = geo.warp_image(raw, eye_norm.warp, (eye_spec.width, eye_spec.height))
                write_pnm(out_root / "images" / f"{stem}.{region}.pgm", patch)
            if not eyes_ok:
                continue
        prepared.append(GazeSample(name, pitch, yaw, s.rotation, s.face_center))
    write_manifest(out_root / "manifest.csv", prepared)
    (out_root / "split.txt").write_text((dataset.split or "prepared") + "\n", encoding="utf-8")
    cfgmod.write_config(out_root / "prepared.cfg", {"prepared": {
        "regions": regions,
        "resolution": str(face_spec.width),
        "eye_resolution": str(eye_resolution if regions == "multi" else 0),
        "source": str(dataset.root),
    }})
    cfgmod.write_config(out_root / "synth.cfg", {"synth": synth_config_to_section(scfg)})
    return load_dataset(out_root)
