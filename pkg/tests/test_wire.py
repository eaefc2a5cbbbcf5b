import io
import socket
import struct

import numpy as np
import pytest

from wxaug.augment import AugmentationChain, DimConfig, DropletConfig, apply_chain
from wxaug.errors import WireError
from wxaug.frames import random_frame
from wxaug.wire import (
    ERROR_SENTINEL,
    HEADER,
    MAGIC,
    StreamServer,
    decode_wire_frames,
    encode_wire_frame,
    read_wire_frame,
    serve_stream,
)

DIM_CHAIN = AugmentationChain((DimConfig(0.5),), 1)


def frames(n, rng, w=16, h=9):
    return [random_frame(w, h, rng, frame_id=1000 + i) for i in range(n)]


def test_encode_decode_round_trip(rng):
    fs = frames(5, rng)
    back = decode_wire_frames(b"".join(encode_wire_frame(f) for f in fs))
    assert back == fs
    assert [f.frame_id for f in back] == [f.frame_id for f in fs]


def test_header_layout(rng):
    f = random_frame(3, 2, rng, frame_id=2**40 + 7)
    data = encode_wire_frame(f)
    assert data[:4] == MAGIC and len(data) == 20 + 18
    assert struct.unpack("<IIQ", data[4:20]) == (3, 2, 2**40 + 7)


def test_clean_eof():
    assert read_wire_frame(io.BytesIO(b"")) is None


@pytest.mark.parametrize("data", [
    b"JUNK" + bytes(16),
    MAGIC + bytes(4),
    HEADER.pack(MAGIC, 0, 5, 0),
    HEADER.pack(MAGIC, (1 << 14) + 1, 5, 0),
    HEADER.pack(MAGIC, 4, 4, 0) + bytes(10),
])
def test_malformed_input_raises(data):
    with pytest.raises(WireError):
        read_wire_frame(io.BytesIO(data))


def test_serve_stream_order_and_content(rng):
    fs = frames(20, rng)
    chain = AugmentationChain((DimConfig(0.7), DropletConfig(0.4)), 3)
    out = io.BytesIO()
    report = serve_stream(io.BytesIO(b"".join(encode_wire_frame(f) for f in fs)), out, chain)
    assert report.frames == 20 and report.error is None
    assert decode_wire_frames(out.getvalue()) == [apply_chain(f, chain) for f in fs]


def test_serve_stream_error_after_good_frames(rng):
    fs = frames(2, rng)
    data = b"".join(encode_wire_frame(f) for f in fs) + b"JUNK" + bytes(16)
    out = io.BytesIO()
    report = serve_stream(io.BytesIO(data), out, DIM_CHAIN)
    assert report.frames == 2 and report.error
    raw = out.getvalue()
    assert raw.endswith(ERROR_SENTINEL)
    assert decode_wire_frames(raw[:-4]) == [apply_chain(f, DIM_CHAIN) for f in fs]


def test_serve_stream_truncated_payload(rng):
    data = encode_wire_frame(frames(1, rng)[0])[:-1]
    out = io.BytesIO()
    report = serve_stream(io.BytesIO(data), out, DIM_CHAIN)
    assert out.getvalue() == ERROR_SENTINEL and report.frames == 0


def _recv_exact(sock, n):
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            break
        buf += chunk
    return buf


def test_tcp_server(rng):
    server = StreamServer(("127.0.0.1", 0), DIM_CHAIN)
    server.start_background()
    try:
        fs = frames(10, rng, 32, 20)
        with socket.create_connection(server.server_address[:2], timeout=10) as sock:
            for f in fs:
                sock.sendall(encode_wire_frame(f))
                reply = _recv_exact(sock, 20 + 32 * 20 * 3)
                assert read_wire_frame(io.BytesIO(reply)) == apply_chain(f, DIM_CHAIN)
            sock.sendall(b"JUNK" + bytes(16))
            assert _recv_exact(sock, 4) == ERROR_SENTINEL
            assert sock.recv(1) == b""
    finally:
        server.shutdown()
        server.server_close()


def test_dim_stream_throughput(rng):
    fs = [random_frame(672, 376, rng, frame_id=i) for i in range(60)]
    report = serve_stream(io.BytesIO(b"".join(encode_wire_frame(f) for f in fs)), io.BytesIO(), DIM_CHAIN)
    # Median per-frame service time must support at least 30 fps.
    assert report.stats.p50 < 1e6 / 30
