"""Run an out-of-process detector over frames.

Frames are written as PPM files into a scratch directory and the command is
run with placeholders filled in:

* ``per-image`` mode runs the command once per frame. ``{image}`` is the PPM
  path and ``{image_id}`` the frame's id. Output records without an
  ``image_id`` are attributed to that frame.
* ``batch`` mode runs the command once. ``{list}`` is a text file with one
  ``<image_id>\\t<ppm path>`` line per frame.

If the template has no placeholder, the path is appended as the last
argument. The command must print detection JSON Lines on stdout.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .errors import DetectorFailedError, InvalidParameterError, ParseError
from .evaluate import Detection
from .frames import write_ppm

PER_IMAGE = "per-image"
BATCH = "batch"


def parse_detector_output(text: str, default_image_id: Optional[str] = None,
                          known_ids: Optional[set] = None) -> list:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            d = json.loads(line)
            if not isinstance(d, dict):
                raise ValueError("expected a JSON object")
            if "image_id" not in d and default_image_id is not None:
                d["image_id"] = default_image_id
            det = Detection.from_dict(d)
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"bad detector output: {exc}", n) from None
        if known_ids is not None and det.image_id not in known_ids:
            raise ParseError(f"detector reported unknown image_id {det.image_id!r}", n)
        out.append(det)
    return out


class ExternalDetector:
    """Callable adapter: ``detector([(image_id, frame), ...]) -> [Detection]``."""

    concurrent_safe = False

    def __init__(self, command: Union[str, Sequence[str]], mode: str = PER_IMAGE,
                 timeout: Optional[float] = None, cwd=None):
        if mode not in (PER_IMAGE, BATCH):
            raise InvalidParameterError(f"mode must be {PER_IMAGE!r} or {BATCH!r}, got {mode!r}")
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.command:
            raise InvalidParameterError("empty detector command")
        self.mode = mode
        self.timeout = timeout
        self.cwd = cwd

    def __repr__(self):
        return f"ExternalDetector({shlex.join(self.command)!r}, mode={self.mode!r})"

    def _argv(self, **subs) -> list:
        argv = []
        used = False
        for arg in self.command:
            for key, value in subs.items():
                token = "{" + key + "}"
                if token in arg:
                    arg = arg.replace(token, value)
                    used = True
            argv.append(arg)
        if not used:
            argv.append(next(iter(subs.values())))
        return argv

    def _run(self, argv) -> str:
        try:
            proc = subprocess.run(argv, capture_output=True, text=True,
                                  timeout=self.timeout, cwd=self.cwd)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise DetectorFailedError(f"could not run detector {argv[0]!r}: {exc}") from exc
        if proc.returncode != 0:
            raise DetectorFailedError(
                f"detector exited with status {proc.returncode}", proc.stderr)
        return proc.stdout

    def __call__(self, frames: Iterable) -> list:
        frames = list(frames)
        ids = {image_id for image_id, _ in frames}
        out = []
        with tempfile.TemporaryDirectory(prefix="wxaug-det-") as tmp:
            tmp = Path(tmp)
            paths = []
            for i, (image_id, frame) in enumerate(frames):
                p = tmp / f"{i:06d}.ppm"
                write_ppm(p, frame)
                paths.append((image_id, p))
            if self.mode == PER_IMAGE:
                for image_id, p in paths:
                    text = self._run(self._argv(image=str(p), image_id=image_id))
                    out.extend(parse_detector_output(text, image_id, {image_id}))
            else:
                listing = tmp / "frames.txt"
                listing.write_text("".join(f"{image_id}\t{p}\n" for image_id, p in paths))
                out.extend(parse_detector_output(self._run(self._argv(list=str(listing))), None, ids))
        return out


def run_external_detector(adapter: ExternalDetector, frames: Iterable) -> list:
    return adapter(frames)


def read_frame_list(path) -> list:
    """Parse a batch-mode list file into ``(image_id, path)`` pairs."""
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError("expected '<image_id>\\t<path>'", n)
        out.append((parts[0], parts[1]))
    return out
