"""Dataset generation: several sampled views per volume, with paired label masks.

Each view's random stream is seeded from a stable hash of
``(seed, volume id, view index)``, so adding or dropping volumes never changes
another volume's outputs, and the worker count never changes any byte.
"""

from __future__ import annotations

import concurrent.futures as cf
import hashlib
import json
import logging
import multiprocessing
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .camera import Camera, ProximityParams, sample_camera
from .images import write_mask, write_radiograph
from .projector import DEFAULT_SAMPLES, Mode, project_labels, render
from .radiance import TransferFunction, map_fields, preset
from .volume import DEFAULT_WINDOW, CtVolume, SegVolume, load_segmentation, load_volume, normalize_hu

logger = logging.getLogger(__name__)

DEFAULT_VIEWS = 10
MANIFEST_NAME = "manifest.jsonl"


@dataclass(frozen=True)
class VolumeSource:
    """A CT volume (in memory or a raw file path) and its optional segmentation."""

    id: str
    ct: Union[CtVolume, str, Path]
    seg: Union[SegVolume, str, Path, None] = None

    def load(self) -> Tuple[CtVolume, Optional[SegVolume]]:
        ct = self.ct if isinstance(self.ct, CtVolume) else load_volume(self.ct)
        seg = self.seg
        if seg is not None and not isinstance(seg, SegVolume):
            seg = load_segmentation(seg)
        return ct, seg


@dataclass(frozen=True)
class RenderConfig:
    camera: Camera = field(default_factory=Camera)
    proximity: ProximityParams = field(default_factory=ProximityParams)
    samples: int = DEFAULT_SAMPLES
    mode: Mode = Mode.EA
    window: Tuple[float, float] = DEFAULT_WINDOW
    transfer: Tuple[TransferFunction, TransferFunction] = field(default_factory=lambda: preset("soft-tissue"))
    scale: float = 1.0
    tau: float = 0.0
    occupancy_only: bool = False

    def describe(self) -> dict:
        return {
            "mode": Mode(self.mode).value,
            "samples": self.samples,
            "base_pose": dict(self.camera.pose.as_dict(), fov=self.camera.fov),
        }


@dataclass
class DatasetManifest:
    records: List[dict]
    path: Optional[Path] = None

    @property
    def images(self) -> List[dict]:
        return [r for r in self.records if "error" not in r]

    @property
    def errors(self) -> List[dict]:
        return [r for r in self.records if "error" in r]

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        records = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        return cls(records, path)

    def verify(self, root=None) -> List[str]:
        """Return the relative paths whose checksum no longer matches."""
        root = Path(root) if root is not None else self.path.parent
        bad = []
        for rec in self.images:
            for key in ("image", "mask"):
                rel = rec.get(key)
                if rel is None:
                    continue
                if not (root / rel).exists() or sha256_file(root / rel) != rec[f"{key}_sha256"]:
                    bad.append(rel)
        return bad


def view_seed(seed: int, volume_id: str, view: int) -> int:
    digest = hashlib.blake2b(f"{seed}\x1f{volume_id}\x1f{view}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _safe_id(volume_id: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in volume_id)


def _render_volume(source: VolumeSource, views: int, seed: int, config: RenderConfig, out_dir: Path) -> List[dict]:
    try:
        ct, seg = source.load()
    except (OSError, ValueError) as exc:
        logger.error("skipping volume %s: %s", source.id, exc)
        return [{"volume_id": source.id, "error": f"{type(exc).__name__}: {exc}"}]
    rv = map_fields(normalize_hu(ct, config.window), *config.transfer)
    records = []
    stem = _safe_id(source.id)
    for view in range(views):
        s = view_seed(seed, source.id, view)
        cam = sample_camera(config.camera, config.proximity, np.random.default_rng(s))
        img = render(rv, cam, config.mode, config.samples, config.scale)
        image_rel = f"images/{stem}_v{view:03d}.png"
        image_path = write_radiograph(out_dir / image_rel, img.pixels)
        image_rel = image_path.relative_to(out_dir).as_posix()
        rec = {
            "volume_id": source.id,
            "view": view,
            "seed": s,
            "pose": dict(cam.pose.as_dict(), fov=cam.fov),
            **config.describe(),
            "image": image_rel,
            "image_sha256": sha256_file(image_path),
            "mask": None,
        }
        if seg is not None:
            mask = project_labels(seg, rv, cam, config.samples, config.tau, config.occupancy_only)
            mask_rel = f"masks/{stem}_v{view:03d}.png"
            mask_path = write_mask(out_dir / mask_rel, mask.labels)
            rec["mask"] = mask_path.relative_to(out_dir).as_posix()
            rec["mask_sha256"] = sha256_file(mask_path)
        records.append(rec)
    return records


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(prefix=".manifest-", dir=path.parent)
    try:
        # mkstemp creates 0600; the manifest should read like any other output
        os.fchmod(fd, 0o644)
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def generate_dataset(
    sources: Sequence[VolumeSource],
    out_dir,
    views: int = DEFAULT_VIEWS,
    seed: int = 0,
    config: Optional[RenderConfig] = None,
    workers: int = 1,
) -> DatasetManifest:
    """Render ``views`` sampled projections of every volume into ``out_dir``.

    Unreadable volumes are skipped and recorded as error entries. The
    manifest is written last, through a temporary file and a rename.
    """
    if not sources:
        raise ValueError("at least one volume is required")
    if views < 1:
        raise ValueError("views per volume must be at least 1")
    ids = [s.id for s in sources]
    if len(set(ids)) != len(ids):
        raise ValueError("volume ids must be unique")
    config = config or RenderConfig()
    out_dir = Path(out_dir)
    try:
        (out_dir / "images").mkdir(parents=True, exist_ok=True)
        (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"output directory {out_dir} is not writable: {exc}") from exc

    if workers <= 1:
        per_volume = [_render_volume(s, views, seed, config, out_dir) for s in sources]
    else:
        ctx = multiprocessing.get_context("spawn")
        with cf.ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futures = [pool.submit(_render_volume, s, views, seed, config, out_dir) for s in sources]
            per_volume = [f.result() for f in futures]

    records = [rec for recs in per_volume for rec in recs]
    manifest_path = out_dir / MANIFEST_NAME
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    _write_atomic(manifest_path, text)
    return DatasetManifest(records, manifest_path)


def phantom_sources(count: int, seed: int = 0, dims=(48, 48, 48), spacing: float = 6.0,
                    jitter: float = 0.1) -> List[VolumeSource]:
    """Distinct jittered chest phantoms, reproducible from ``seed``."""
    from .phantoms import chest_spec, make_phantom

    out = []
    for k in range(count):
        vid = f"phantom{k:04d}"
        rng = np.random.default_rng(view_seed(seed, vid, -1))
        ct, seg = make_phantom(chest_spec(dims, spacing, jitter, rng))
        out.append(VolumeSource(vid, ct, seg))
    return out
