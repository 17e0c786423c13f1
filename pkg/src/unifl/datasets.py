"""Dataset presets and on-disk dataset directories.

A dataset directory holds ``train/``, ``val/`` and ``test/`` subdirectories
of instance files plus an ``index.json`` manifest listing them.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .instance import GeneratorConfig, generate_geometric, load_instance, save_instance

# 1000 points, 100 components, std 0.6 in a 40 x 40 box gives mean degree ~6.6 in 2D
REF_POINTS = 1000
REF_COMPONENTS = 100
REF_STD = 0.6
REF_SCALE = 40.0
SPLITS = ("train", "val", "test")


def geo_config(n, dim=2, seed=0, points_per_component=10, component_std=REF_STD,
               scale_2d=REF_SCALE):
    """Generator config keeping the reference density regime at any ``n``.

    The number of components grows with ``n`` and the box grows so the number
    of components per unit volume stays fixed.
    """
    components = max(1, int(round(n / points_per_component)))
    scale = scale_2d * (components / REF_COMPONENTS) ** (1.0 / dim)
    return GeneratorConfig(n=n, dim=dim, components=components, component_std=component_std,
                           domain_scale=float(scale), seed=seed)


def geo_instances(count, n, dim=2, seed=0, **kwargs):
    rng = np.random.SeedSequence(seed)
    seeds = rng.generate_state(count, dtype=np.uint64)
    return [generate_geometric(geo_config(n, dim, int(s), **kwargs)) for s in seeds]


def calibrate(cfg, repeats=5):
    """Mean degree (self-loops excluded) over ``repeats`` seeds starting at ``cfg.seed``."""
    from dataclasses import replace

    degs = [generate_geometric(replace(cfg, seed=cfg.seed + i)).mean_degree()
            for i in range(repeats)]
    return {"mean_degree": float(np.mean(degs)), "std_degree": float(np.std(degs)),
            "repeats": repeats}


def split_counts(total, ratios=(8, 1, 1)):
    parts = [total * r // sum(ratios) for r in ratios]
    parts[0] += total - sum(parts)
    return dict(zip(SPLITS, parts))


def write_dataset(root, count, n, dim=2, seed=0, ratios=(8, 1, 1)):
    """Generate ``count`` instances and write them split 8:1:1 under ``root``."""
    instances = geo_instances(count, n, dim, seed)
    index = {"n": n, "dim": dim, "seed": seed, "splits": {}}
    pos = 0
    for split, size in split_counts(count, ratios).items():
        os.makedirs(os.path.join(root, split), exist_ok=True)
        names = []
        for j, inst in enumerate(instances[pos:pos + size]):
            name = f"{split}-{j:05d}.unifl"
            save_instance(inst, os.path.join(root, split, name))
            names.append(f"{split}/{name}")
        index["splits"][split] = names
        pos += size
    with open(os.path.join(root, "index.json"), "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=2)
    return index


def load_split(root, split):
    with open(os.path.join(root, "index.json"), encoding="utf-8") as fh:
        index = json.load(fh)
    return [load_instance(os.path.join(root, rel)) for rel in index["splits"].get(split, [])]
