"""
The frame stream
================

Encode frames by hand, push them through a TCP server and decode the replies.
"""

import socket
import struct

import numpy as np

from wxaug import AugmentationChain, DimConfig, apply_chain, random_frame
from wxaug.wire import ERROR_SENTINEL, StreamServer, encode_wire_frame, read_wire_frame

rng = np.random.default_rng(1)
frame = random_frame(4, 2, rng, frame_id=17)
msg = encode_wire_frame(frame)
print("header", msg[:4], struct.unpack("<IIQ", msg[4:20]), "payload", len(msg) - 20, "bytes")

chain = AugmentationChain((DimConfig(0.5),), seed=0)
server = StreamServer(("127.0.0.1", 0), chain)
server.start_background()
host, port = server.server_address[:2]

frames = [random_frame(64, 48, rng, frame_id=i) for i in range(5)]
with socket.create_connection((host, port)) as sock:
    sock.sendall(b"".join(encode_wire_frame(f) for f in frames))
    stream = sock.makefile("rb")
    for f in frames:
        back = read_wire_frame(stream)
        assert back == apply_chain(f, chain)
        print("frame", back.frame_id, "ok")
    sock.sendall(b"JUNK" + bytes(16))
    print("bad header ->", stream.read(4) == ERROR_SENTINEL and "WXE1")

server.shutdown()
server.server_close()
stats = server.reports[0].stats.as_ms()
print("server side p50 %.3f ms" % stats["p50"])
