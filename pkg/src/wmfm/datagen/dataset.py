"""Record sampling and the on-disk dataset format.

A dataset directory holds ``manifest.json`` plus one packed little-endian
binary file per split. Each record is, in order: the channel as float32
(real, imag) pairs row-major over antennas then subcarriers; the image as
height*width*3 uint8 row-major; uint8 los, float32 pos_x, uint8 lane_y,
uint8 z_class, uint8 bs_id; uint64 sample_seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import synthesize_channel
from .noise import inject_noise
from .render import render_scene
from .scenario import Blocker, ConfigError, MultimodalRecord, NoiseSpec, ScenarioConfig, line_of_sight, segment_hits_box

FORMAT_NAME = "wmfm-dataset"
FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")
LABEL_FIELDS = ("los", "pos_x", "lane_y", "z_class", "bs_id")


def record_dtype(cfg: ScenarioConfig) -> np.dtype:
    h, w, c = cfg.image_dims
    return np.dtype([
        ("csi", "<f4", (cfg.antennas * cfg.subcarriers * 2,)),
        ("image", "u1", (h, w, c)),
        ("los", "u1"),
        ("pos_x", "<f4"),
        ("lane_y", "u1"),
        ("z_class", "u1"),
        ("bs_id", "u1"),
        ("sample_seed", "<u8"),
    ])


def derive_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1, np.uint64)[0])


def _ue_position(cfg, rng, bs_id, lane, z):
    v0, v1 = cfg.bs_view(bs_id)
    x = rng.uniform(max(0.0, v0 + 3.0), min(cfg.street_length, v1 - 3.0))
    y = cfg.lane_y_centers[lane] + rng.uniform(-cfg.lane_jitter, cfg.lane_jitter)
    return (float(x), float(y), float(z))


# occluders are trucks parked or driving between the UE and its BS; distractors are cars
TRUCK_HALF_X = (3.0, 5.0)
TRUCK_HALF_Y = (1.1, 1.3)
CAR_HALF_X = (1.5, 2.5)
CAR_HALF_Y = (0.8, 1.0)
CAR_HEIGHT = (1.2, 2.0)


def _occluder(cfg, rng, bs, ue):
    for _ in range(50):
        t = rng.uniform(0.4, 0.92)
        p = [bs[a] + t * (ue[a] - bs[a]) for a in range(3)]
        b = Blocker(p[0], p[1], rng.uniform(*TRUCK_HALF_X), rng.uniform(*TRUCK_HALF_Y), p[2] + rng.uniform(0.3, 1.5))
        if b.contains_xy(ue[0], ue[1]) or abs(b.cy) > cfg.road_half_width:
            continue
        if segment_hits_box(bs, ue, b):
            return b
    return None


def _distractor(cfg, rng, bs_id, bs, ue):
    v0, v1 = cfg.bs_view(bs_id)
    for _ in range(20):
        b = Blocker(
            rng.uniform(v0, v1),
            cfg.lane_y_centers[rng.integers(cfg.num_lanes)],
            rng.uniform(*CAR_HALF_X),
            rng.uniform(*CAR_HALF_Y),
            rng.uniform(*CAR_HEIGHT),
        )
        if not b.contains_xy(ue[0], ue[1]) and not segment_hits_box(bs, ue, b):
            return b
    return None


def sample_scene(cfg: ScenarioConfig, sample_seed: int):
    """Draw (bs_id, ue_pos, lane, z_class, blockers) for one record."""
    rng = np.random.default_rng(sample_seed)
    bs_id = int(rng.integers(cfg.num_bs))
    lane = int(rng.integers(cfg.num_lanes))
    zc = int(rng.integers(cfg.z_classes))
    z = cfg.z_range[0] + (zc + rng.uniform(0.05, 0.95)) * cfg.z_bin_width
    ue = _ue_position(cfg, rng, bs_id, lane, z)
    bs = tuple(float(v) for v in cfg.bs_positions[bs_id])
    blockers = []
    if rng.random() < cfg.blocker_density:
        occ = _occluder(cfg, rng, bs, ue)
        if occ is not None:
            blockers.append(occ)
    for _ in range(int(rng.integers(cfg.max_distractors + 1))):
        d = _distractor(cfg, rng, bs_id, bs, ue)
        if d is not None:
            blockers.append(d)
    return bs_id, ue, lane, zc, tuple(blockers)


def make_record(cfg: ScenarioConfig, sample_seed: int, noise: NoiseSpec = NoiseSpec()) -> MultimodalRecord:
    """Build one record; a pure function of ``(cfg, sample_seed, noise)``."""
    bs_id, ue, lane, zc, blockers = sample_scene(cfg, sample_seed)
    bs = tuple(float(v) for v in cfg.bs_positions[bs_id])
    H = synthesize_channel(cfg, ue, bs_id, blockers, seed=sample_seed)
    if noise.enabled:
        H = inject_noise(H, noise, np.random.SeedSequence([sample_seed, 1]))
    image = render_scene(cfg, ue, blockers, bs_id, seed=sample_seed, z_class=zc)
    return MultimodalRecord(
        H=H,
        image=image,
        los_label=int(line_of_sight(bs, ue, blockers)),
        pos_x=ue[0],
        lane_y=lane,
        z_class=zc,
        bs_id=bs_id,
        sample_seed=sample_seed,
        ue_pos=ue,
        blockers=blockers,
    )


class LabelAccessError(AttributeError):
    """Raised when label fields are read through an unlabeled view."""


@dataclass
class Split:
    """Columnar in-memory view of one split."""

    H: np.ndarray  # (N, M, S) complex
    images: np.ndarray  # (N, h, w, 3) uint8
    los: np.ndarray
    pos_x: np.ndarray
    lane_y: np.ndarray
    z_class: np.ndarray
    bs_id: np.ndarray
    sample_seed: np.ndarray

    def __len__(self):
        return len(self.H)

    def subset(self, idx) -> "Split":
        idx = np.asarray(idx)
        return Split(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))

    def with_channels(self, H) -> "Split":
        fields = {f: getattr(self, f) for f in self.__dataclass_fields__}
        fields["H"] = H
        return Split(**fields)

    def unlabeled(self) -> "UnlabeledView":
        return UnlabeledView(self)

    @classmethod
    def from_records(cls, records) -> "Split":
        return cls(
            H=np.stack([r.H for r in records]).astype(np.complex64),
            images=np.stack([r.image for r in records]),
            los=np.array([r.los_label for r in records], dtype=np.uint8),
            pos_x=np.array([r.pos_x for r in records], dtype=np.float32),
            lane_y=np.array([r.lane_y for r in records], dtype=np.uint8),
            z_class=np.array([r.z_class for r in records], dtype=np.uint8),
            bs_id=np.array([r.bs_id for r in records], dtype=np.uint8),
            sample_seed=np.array([r.sample_seed for r in records], dtype=np.uint64),
        )

    def to_structured(self, cfg: ScenarioConfig) -> np.ndarray:
        arr = np.zeros(len(self), dtype=record_dtype(cfg))
        H = self.H.astype(np.complex64)
        arr["csi"] = H.view(np.float32).reshape(len(self), -1) if len(self) else arr["csi"]
        arr["image"] = self.images
        for f in LABEL_FIELDS + ("sample_seed",):
            arr[f] = getattr(self, f)
        return arr

    @classmethod
    def from_structured(cls, arr: np.ndarray, cfg: ScenarioConfig) -> "Split":
        n = len(arr)
        csi = np.ascontiguousarray(arr["csi"]).astype(np.float32)
        H = csi.view(np.complex64).reshape(n, cfg.antennas, cfg.subcarriers)
        return cls(
            H=H,
            images=np.ascontiguousarray(arr["image"]),
            los=np.asarray(arr["los"]).copy(),
            pos_x=np.asarray(arr["pos_x"]).astype(np.float32),
            lane_y=np.asarray(arr["lane_y"]).copy(),
            z_class=np.asarray(arr["z_class"]).copy(),
            bs_id=np.asarray(arr["bs_id"]).copy(),
            sample_seed=np.asarray(arr["sample_seed"]).astype(np.uint64),
        )


class UnlabeledView:
    """Channel/image pairs only; any label access raises :class:`LabelAccessError`."""

    def __init__(self, split: Split):
        self._split = split

    @property
    def H(self):
        return self._split.H

    @property
    def images(self):
        return self._split.images

    @property
    def sample_seed(self):
        return self._split.sample_seed

    def __len__(self):
        return len(self._split)

    def subset(self, idx):
        return UnlabeledView(self._split.subset(idx))

    def with_channels(self, H):
        return UnlabeledView(self._split.with_channels(H))

    def __getattr__(self, name):
        if name in LABEL_FIELDS:
            raise LabelAccessError(f"label field '{name}' is withheld from this view")
        raise AttributeError(name)


@dataclass
class Dataset:
    cfg: ScenarioConfig
    splits: dict
    manifest: dict

    def __getitem__(self, name) -> Split:
        return self.splits[name]

    @property
    def train(self):
        return self.splits["train"]

    @property
    def val(self):
        return self.splits["val"]

    @property
    def test(self):
        return self.splits["test"]


def split_counts(n_records, split_ratios):
    ratios = np.asarray(split_ratios, dtype=np.float64)
    if len(ratios) != 3 or np.any(ratios < 0) or abs(ratios.sum() - 1.0) > 1e-9:
        raise ConfigError(f"split_ratios must be three nonnegative values summing to 1, got {list(split_ratios)}")
    n_train = int(round(n_records * ratios[0]))
    n_val = int(round(n_records * ratios[1]))
    n_val = min(n_val, n_records - n_train)
    return {"train": n_train, "val": n_val, "test": n_records - n_train - n_val}


def generate_split(cfg, n, seed, noise=NoiseSpec(), start=0) -> Split:
    records = [make_record(cfg, derive_seed(seed, start + i), noise) for i in range(n)]
    if not records:
        h, w, _ = cfg.image_dims
        return Split(
            np.zeros((0, cfg.antennas, cfg.subcarriers), np.complex64), np.zeros((0, h, w, 3), np.uint8),
            *(np.zeros(0, dt) for dt in (np.uint8, np.float32, np.uint8, np.uint8, np.uint8, np.uint64)),
        )
    return Split.from_records(records)


def build_dataset(cfg, n_records, noise=NoiseSpec(), split_ratios=(1 / 3, 1 / 3, 1 / 3), seed=0) -> Dataset:
    """Generate all splits in memory. Record ``i`` uses seed ``derive_seed(seed, i)``."""
    counts = split_counts(n_records, split_ratios)
    splits = {}
    start = 0
    for name in SPLITS:
        splits[name] = generate_split(cfg, counts[name], seed, noise, start)
        start += counts[name]
    manifest = _manifest(cfg, counts, noise, split_ratios, seed)
    return Dataset(cfg, splits, manifest)


def _manifest(cfg, counts, noise, split_ratios, seed):
    return {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "byte_order": "little",
        "config": cfg.to_dict(),
        "noise": noise.to_dict(),
        "seed": int(seed),
        "split_ratios": [float(r) for r in split_ratios],
        "counts": counts,
        "files": {name: f"{name}.bin" for name in SPLITS},
        "record_bytes": record_dtype(cfg).itemsize,
        "record_layout": [
            f"csi float32[{cfg.antennas}*{cfg.subcarriers}*2] interleaved real/imag, antenna-major",
            f"image uint8[{cfg.image_dims[0]}*{cfg.image_dims[1]}*3] row-major",
            "los uint8", "pos_x float32", "lane_y uint8", "z_class uint8", "bs_id uint8", "sample_seed uint64",
        ],
    }


def write_dataset(ds: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in SPLITS:
        path = out / ds.manifest["files"][name]
        try:
            ds.splits[name].to_structured(ds.cfg).tofile(path)
        except OSError as exc:
            raise OSError(f"failed writing {path}: {exc}") from exc
    mpath = out / "manifest.json"
    try:
        mpath.write_text(json.dumps(ds.manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing {mpath}: {exc}") from exc
    return out


def generate_dataset(cfg, n_records, noise=NoiseSpec(), split_ratios=(1 / 3, 1 / 3, 1 / 3), seed=0, out_dir=None) -> Dataset:
    """Generate a dataset and, if ``out_dir`` is given, write it to disk."""
    ds = build_dataset(cfg, n_records, noise, split_ratios, seed)
    if out_dir is not None:
        write_dataset(ds, out_dir)
    return ds


def load_dataset(path) -> Dataset:
    path = Path(path)
    mpath = path / "manifest.json"
    try:
        manifest = json.loads(mpath.read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"dataset manifest not found: {mpath}") from None
    if manifest.get("format") != FORMAT_NAME:
        raise ConfigError(f"{mpath}: not a {FORMAT_NAME} manifest")
    cfg = ScenarioConfig.from_dict(manifest["config"])
    dt = record_dtype(cfg)
    splits = {}
    for name in SPLITS:
        fpath = path / manifest["files"][name]
        try:
            arr = np.fromfile(fpath, dtype=dt)
        except FileNotFoundError:
            raise FileNotFoundError(f"dataset split file not found: {fpath}") from None
        if len(arr) != manifest["counts"][name]:
            raise ConfigError(f"{fpath}: expected {manifest['counts'][name]} records, found {len(arr)}")
        splits[name] = Split.from_structured(arr, cfg)
    return Dataset(cfg, splits, manifest)
