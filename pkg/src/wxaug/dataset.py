"""Dataset manifests: PPM images plus YOLO label files, indexed by a JSON file.

Manifest layout (paths relative to the manifest's directory)::

    {"class_names": ["blue_cone", "yellow_cone"],
     "entries": [{"image_id": "000000", "image": "images/000000.ppm",
                  "gt": "labels/000000.txt", "width": 672, "height": 376}]}
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidInputError, ParseError
from .evaluate import format_yolo_gt, parse_yolo_gt
from .frames import Frame, read_ppm, write_ppm

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image: str
    gt: str
    width: int
    height: int


@dataclass
class Sample:
    image_id: str
    frame: Frame
    gts: list


@dataclass
class DatasetManifest:
    root: Path
    entries: list
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        self.root = Path(self.root)
        ids = [e.image_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("manifest image_ids must be unique")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        try:
            with open(path) as fh:
                raw = json.load(fh)
            entries = [ManifestEntry(str(e["image_id"]), e["image"], e["gt"],
                                     int(e["width"]), int(e["height"])) for e in raw["entries"]]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"cannot read manifest {path}: {exc}") from None
        m = cls(path.parent, entries, list(raw.get("class_names", [])))
        for e in m.entries:
            for rel in (e.image, e.gt):
                if not (m.root / rel).is_file():
                    raise InvalidInputError(f"{e.image_id}: missing file {m.root / rel}")
        return m

    def save(self, path=None) -> Path:
        path = Path(path) if path else self.root / MANIFEST_NAME
        with open(path, "w") as fh:
            json.dump({"class_names": self.class_names,
                       "entries": [dataclasses.asdict(e) for e in self.entries]}, fh, indent=1)
            fh.write("\n")
        return path

    def __len__(self):
        return len(self.entries)

    def load_frame(self, index: int) -> Frame:
        e = self.entries[index]
        frame = read_ppm(self.root / e.image, frame_id=index)
        if frame.size != (e.width, e.height):
            raise InvalidInputError(f"{e.image_id}: image is {frame.size}, manifest says {(e.width, e.height)}")
        return frame

    def load_gt(self, index: int) -> list:
        e = self.entries[index]
        text = (self.root / e.gt).read_text()
        return parse_yolo_gt(text, e.image_id, e.width, e.height)

    def samples(self) -> list:
        """All entries as in-memory samples; frame ids follow manifest order."""
        return [Sample(e.image_id, self.load_frame(i), self.load_gt(i)) for i, e in enumerate(self.entries)]


def write_dataset(root, samples, class_names=(), image_dir="images", label_dir="labels") -> DatasetManifest:
    """Write samples as PPM + YOLO files under ``root`` and save the manifest."""
    root = Path(root)
    (root / image_dir).mkdir(parents=True, exist_ok=True)
    (root / label_dir).mkdir(parents=True, exist_ok=True)
    entries = []
    for s in samples:
        stem = _safe_stem(s.image_id)
        img_rel = f"{image_dir}/{stem}.ppm"
        gt_rel = f"{label_dir}/{stem}.txt"
        write_ppm(root / img_rel, s.frame)
        (root / gt_rel).write_text(format_yolo_gt(s.gts, s.frame.width, s.frame.height))
        entries.append(ManifestEntry(s.image_id, img_rel, gt_rel, s.frame.width, s.frame.height))
    m = DatasetManifest(root, entries, list(class_names))
    m.save()
    return m


def _safe_stem(image_id: str) -> str:
    stem = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in image_id)
    if not stem or stem.startswith("."):
        stem = "_" + stem
    return stem


def generate_toy_dataset(root, n_images: int, seed: int = 0, **scene_kw) -> DatasetManifest:
    """Render ``n_images`` toy-world scenes into a dataset directory."""
    from .augment import derive_seed
    from .toyworld import CLASS_NAMES, SceneSpec, generate_scene

    samples = []
    for i in range(n_images):
        frame, gts = generate_scene(SceneSpec(seed=derive_seed(seed, i), **scene_kw))
        image_id = f"{i:06d}"
        frame.frame_id = i
        samples.append(Sample(image_id, frame, [dataclasses.replace(g, image_id=image_id) for g in gts]))
    return write_dataset(root, samples, CLASS_NAMES)

