"""Experiment grids: cartesian {stride} x {resolution} x {variant} runs.

Each cell prepares the data it needs (cached per resolution/regions),
trains over the configured seeds with identical data, evaluates on the
test split and lands in one results row. The markdown report adds a
reference column quoting published full-scale results (ResNet-50 and
PoolFormer-24 on ETH-XGaze) for orientation; desk-scale numbers are not
comparable to them in absolute terms.
"""

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import arch as archmod
from . import config as cfgmod
from . import dataset as dsmod
from . import geometry as geo
from . import training


RESULTS_HEADER = ("config_id,arch,stride,resolution,regions,shared_eyes,"
                  "mean_err_deg,median_err_deg,params,epochs,wall_s")

# Published full-scale reference errors (degrees, ETH-XGaze), documentation only.
# Single-face ResNet-50 by (resolution rank: 0=lower of the two, stride):
REFERENCE_SINGLE_FACE = {(0, 2): 4.50, (0, 1): 4.00, (1, 2): 3.95, (1, 1): 3.76}
# Multi-region ResNet-50 at 224 by (shared eye nets, stride):
REFERENCE_MULTIREGION = {(False, 2): 3.88, (False, 1): 3.64,
                         (True, 2): 3.70, (True, 1): 3.69}
# PoolFormer-24 at 224 by (patch stride, with self-attention):
REFERENCE_POOLFORMER = {(4, True): 4.73, (4, False): 4.56,
                        (2, False): 3.98, (1, False): 3.67}


@dataclass
class GridSpec:
    arch: str = "minires"
    strides: tuple = (1, 2)
    resolutions: tuple = (64,)
    variants: tuple = ()          # multiregion: shared/unshared; poolformer: pool/attention
    seeds: tuple = (0,)
    raw_train: str = ""
    raw_val: str = ""
    raw_test: str = ""
    eye_resolution: int = 32
    eye_focal: float = 0.0        # 0 = spec default 960*(w/224)
    workdir: str = ""
    out_dir: str = ""
    model: archmod.ModelConfig = field(default_factory=archmod.ModelConfig)
    train: training.TrainConfig = field(default_factory=training.TrainConfig)

    def cells(self):
        variants = self.variants or _default_variants(self.arch)
        return [(s, r, v) for r in self.resolutions for s in self.strides
                for v in variants]


def _default_variants(arch_name):
    if arch_name == "multiregion":
        return ("unshared",)
    if arch_name == "poolformer":
        return ("pool",)
    return ("face",)


GRID_SCHEMA = {
    "arch": cfgmod.as_str,
    "strides": cfgmod.as_int_tuple,
    "resolutions": cfgmod.as_int_tuple,
    "variants": lambda s: tuple(v.strip() for v in s.split(",") if v.strip()),
    "seeds": cfgmod.as_int_tuple,
    "eye_resolution": cfgmod.as_int,
    "eye_focal": cfgmod.as_float,
    "workdir": cfgmod.as_str,
    "out_dir": cfgmod.as_str,
}


def grid_spec_from_file(path):
    raw = cfgmod.read_config(path)
    known = {"grid", "data", "model", "train"}
    unknown = set(raw) - known
    if unknown:
        raise cfgmod.ConfigError(f"unknown grid config sections: {sorted(unknown)}")
    g = cfgmod.apply_schema("grid", raw.get("grid", {}), GRID_SCHEMA)
    data = cfgmod.apply_schema("data", raw.get("data", {}),
                               {"raw_train": cfgmod.as_str, "raw_val": cfgmod.as_str,
                                "raw_test": cfgmod.as_str})
    mc = training.model_config_from_section(raw.get("model", {}))
    tr = cfgmod.apply_schema("train", raw.get("train", {}), training.TRAIN_SCHEMA)
    tr.pop("out_dir", None)
    return GridSpec(model=mc, train=training.TrainConfig(model=mc, **tr),
                    **g, **data)


def _prepare_cached(spec, raw_dir, resolution, regions, cache):
    key = (str(raw_dir), resolution, regions)
    if key in cache:
        return cache[key]
    raw = dsmod.load_dataset(raw_dir)
    tag = Path(raw_dir).name
    out = Path(spec.workdir) / f"{tag}_{regions}_r{resolution}"
    if (out / "manifest.csv").exists():
        prepared = dsmod.load_dataset(out)
    else:
        eye_spec = None
        if regions == "multi":
            focal = spec.eye_focal or None
            eye_spec = geo.eye_normalization_spec(spec.eye_resolution, focal=focal)
        prepared = dsmod.prepare_inputs(raw, out, regions=regions, resolution=resolution,
                                        eye_spec=eye_spec,
                                        eye_resolution=spec.eye_resolution)
    cache[key] = prepared
    return prepared


def _cell_model_config(spec, stride, resolution, variant):
    mc = spec.model
    if spec.arch == "minires":
        return replace(mc, arch="minires", first_stride=stride, resolution=resolution)
    if spec.arch == "poolformer":
        attn = (2, 3) if variant == "attention" else ()
        return replace(mc, arch="poolformer", patch_stride=stride,
                       resolution=resolution, attention_stages=attn)
    if spec.arch == "multiregion":
        return replace(mc, arch="multiregion", first_stride=stride,
                       resolution=resolution, share_eye_weights=(variant == "shared"),
                       eye_resolution=spec.eye_resolution)
    raise cfgmod.ConfigError(f"unknown grid arch {spec.arch!r}")


def run_grid(spec):
    """Run every cell; returns result rows and writes CSV + markdown."""
    if not spec.raw_train or not spec.raw_test:
        raise cfgmod.ConfigError("grid needs [data] raw_train and raw_test")
    if not spec.workdir:
        raise cfgmod.ConfigError("grid needs [grid] workdir for prepared data")
    regions = "multi" if spec.arch == "multiregion" else "face"
    cache = {}
    rows = []
    for stride, resolution, variant in spec.cells():
        mc = _cell_model_config(spec, stride, resolution, variant)
        train_ds = _prepare_cached(spec, spec.raw_train, resolution, regions, cache)
        test_ds = _prepare_cached(spec, spec.raw_test, resolution, regions, cache)
        val_inputs = None
        if spec.raw_val:
            val_ds = _prepare_cached(spec, spec.raw_val, resolution, regions, cache)
            val_inputs = dsmod.load_inputs(val_ds)
        train_inputs, train_labels = dsmod.load_inputs(train_ds)
        test_inputs, test_labels = dsmod.load_inputs(test_ds)
        t0 = time.perf_counter()
        means, medians = [], []
        params = 0
        for seed in spec.seeds:
            cfg = replace(spec.train, model=mc, seed=seed)
            model = archmod.build_from_model_config(mc, seed=seed)
            training.run_training(model, train_inputs, train_labels, cfg,
                                  val_inputs=val_inputs[0] if val_inputs else None,
                                  val_labels=val_inputs[1] if val_inputs else None)
            res = training.evaluate_arrays(model, test_inputs, test_labels)
            means.append(res.mean_deg)
            medians.append(res.median_deg)
            params = archmod.parameter_count(model)
        wall = time.perf_counter() - t0
        rows.append({
            "config_id": f"{spec.arch}_s{stride}_r{resolution}_{variant}",
            "arch": spec.arch,
            "stride": stride,
            "resolution": resolution,
            "regions": regions,
            "shared_eyes": variant == "shared",
            "mean_err_deg": float(np.mean(means)),
            "median_err_deg": float(np.mean(medians)),
            "params": params,
            "epochs": spec.train.resolved().epochs,
            "wall_s": wall,
        })
    if spec.out_dir:
        out = Path(spec.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_results_csv(out / "results.csv", rows)
        (out / "results.md").write_text(results_markdown(rows), encoding="utf-8")
    return rows


def write_results_csv(path, rows):
    lines = [RESULTS_HEADER]
    for r in rows:
        lines.append(",".join([
            r["config_id"], r["arch"], str(r["stride"]), str(r["resolution"]),
            r["regions"], "true" if r["shared_eyes"] else "false",
            f"{r['mean_err_deg']:.6f}", f"{r['median_err_deg']:.6f}",
            str(r["params"]), str(r["epochs"]), f"{r['wall_s']:.3f}"]))
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(lines) + "\n")


def read_results_csv(path):
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln for ln in f.read().splitlines() if ln]
    if not lines or lines[0] != RESULTS_HEADER:
        raise cfgmod.ConfigError(f"{path}: bad results header")
    rows = []
    for ln in lines[1:]:
        p = ln.split(",")
        rows.append({"config_id": p[0], "arch": p[1], "stride": int(p[2]),
                     "resolution": int(p[3]), "regions": p[4],
                     "shared_eyes": p[5] == "true", "mean_err_deg": float(p[6]),
                     "median_err_deg": float(p[7]), "params": int(p[8]),
                     "epochs": int(p[9]), "wall_s": float(p[10])})
    return rows


def reference_deg(row, resolutions_in_table):
    """Published full-scale reference for one cell, or None."""
    if row["arch"] == "minires":
        ranks = {r: i for i, r in enumerate(sorted(set(resolutions_in_table)))}
        if len(ranks) == 2:
            return REFERENCE_SINGLE_FACE.get((ranks[row["resolution"]], row["stride"]))
        return None
    if row["arch"] == "multiregion":
        return REFERENCE_MULTIREGION.get((row["shared_eyes"], row["stride"]))
    if row["arch"] == "poolformer":
        attention = row["config_id"].endswith("_attention")
        return REFERENCE_POOLFORMER.get((row["stride"], attention))
    return None


def results_markdown(rows):
    """Aligned markdown table with the full-scale reference column."""
    resolutions = [r["resolution"] for r in rows]
    header = ["config_id", "arch", "stride", "resolution", "regions", "shared_eyes",
              "mean_err_deg", "median_err_deg", "params", "epochs", "wall_s",
              "reference_deg"]
    table = [header]
    for r in rows:
        ref = reference_deg(r, resolutions)
        table.append([
            r["config_id"], r["arch"], str(r["stride"]), str(r["resolution"]),
            r["regions"], "yes" if r["shared_eyes"] else "no",
            f"{r['mean_err_deg']:.3f}", f"{r['median_err_deg']:.3f}",
            str(r["params"]), str(r["epochs"]), f"{r['wall_s']:.1f}",
            f"{ref:.2f}" if ref is not None else "-"])
    widths = [max(len(row[c]) for row in table) for c in range(len(header))]
    def fmt(row):
        return "| " + " | ".join(v.ljust(w) for v, w in zip(row, widths)) + " |"
    lines = [fmt(table[0]),
             "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    lines += [fmt(row) for row in table[1:]]
    return "\n".join(lines) + "\n"
