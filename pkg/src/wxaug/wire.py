"""Length-implied frame streaming.

Each frame on the wire is a 20-byte header followed by the raw RGB raster::

    magic     4 bytes  b"WXA1"
    width     u32 little-endian
    height    u32 little-endian
    frame_id  u64 little-endian
    payload   width * height * 3 bytes

The server answers every inbound frame with the augmented frame under an
identical header, strictly in arrival order. On a malformed header or a
truncated payload it writes the 4-byte sentinel b"WXE1" and closes.
"""

from __future__ import annotations

import io
import logging
import socketserver
import struct
import sys
import threading
import time
from dataclasses import dataclass, field
from typing import BinaryIO, Optional

from .augment import AugmentationChain, LatencyStats, apply_chain
from .errors import WireError
from .frames import Frame

log = logging.getLogger(__name__)

MAGIC = b"WXA1"
ERROR_SENTINEL = b"WXE1"
HEADER = struct.Struct("<4sIIQ")
MAX_SIDE = 1 << 14


def encode_wire_frame(frame: Frame) -> bytes:
    return HEADER.pack(MAGIC, frame.width, frame.height, frame.frame_id) + frame.tobytes()


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_wire_frame(stream: BinaryIO) -> Optional[Frame]:
    """Read one frame, or return None on a clean end of stream."""
    head = _read_exact(stream, HEADER.size)
    if not head:
        return None
    if len(head) < 4 or head[:4] != MAGIC:
        raise WireError(f"bad magic {head[:4]!r}")
    if len(head) < HEADER.size:
        raise WireError("truncated header")
    _, width, height, frame_id = HEADER.unpack(head)
    if not (1 <= width <= MAX_SIDE and 1 <= height <= MAX_SIDE):
        raise WireError(f"frame size {width}x{height} outside 1..{MAX_SIDE}")
    need = width * height * 3
    payload = _read_exact(stream, need)
    if len(payload) != need:
        raise WireError(f"truncated payload: {len(payload)} of {need} bytes")
    return Frame.from_bytes(width, height, payload, frame_id)


def decode_wire_frames(data: bytes) -> list:
    """Split a byte string of back-to-back wire frames."""
    buf = io.BytesIO(data)
    out = []
    while True:
        f = read_wire_frame(buf)
        if f is None:
            return out
        out.append(f)


@dataclass
class StreamReport:
    frames: int = 0
    error: Optional[str] = None
    latency_us: list = field(default_factory=list, repr=False)

    @property
    def stats(self) -> LatencyStats:
        return LatencyStats.from_samples(self.latency_us)


def serve_stream(instream: BinaryIO, outstream: BinaryIO, chain: AugmentationChain) -> StreamReport:
    """Augment frames from ``instream`` to ``outstream`` until EOF or a protocol error.

    Recorded latency runs from a fully received frame to its reply being
    flushed; time spent waiting on the client is excluded.
    """
    report = StreamReport()
    clock = time.perf_counter_ns
    while True:
        try:
            frame = read_wire_frame(instream)
        except WireError as exc:
            report.error = str(exc)
            outstream.write(ERROR_SENTINEL)
            outstream.flush()
            return report
        if frame is None:
            return report
        t1 = clock()
        out = encode_wire_frame(apply_chain(frame, chain))
        outstream.write(out)
        outstream.flush()
        report.latency_us.append((clock() - t1) / 1e3)
        report.frames += 1


def serve_stdio(chain: AugmentationChain) -> StreamReport:
    return serve_stream(sys.stdin.buffer, sys.stdout.buffer, chain)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        report = serve_stream(self.rfile, self.wfile, self.server.chain)
        self.server.reports.append(report)
        s = report.stats
        log.info("connection %s: %d frames, p50 %.1f us, p95 %.1f us, error=%s",
                 self.client_address, report.frames, s.p50, s.p95, report.error)


class StreamServer(socketserver.ThreadingTCPServer):
    """TCP front end; one worker thread per connection."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, chain: AugmentationChain):
        super().__init__(address, _Handler)
        self.chain = chain
        self.reports = []

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t
