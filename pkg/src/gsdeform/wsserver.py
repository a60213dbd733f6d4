"""Minimal RFC 6455 WebSocket server hosting edit sessions.

One session per connection; messages are processed strictly serially
per session, and queued drags are superseded by newer queued drags so
an interactive client never waits on stale targets. JSON control
messages travel as text frames, update frames as binary frames.

Only the server side of the protocol is implemented (client frames must
be masked, ours are not); permessage-deflate and other extensions are
not negotiated.
"""

import asyncio
import base64
import collections
import hashlib
import json
import struct

import numpy as np

from .service import EditSession

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA

_MAX_MESSAGE = 64 * 1024 * 1024


class _SocketClosed(Exception):
    pass


def accept_key(client_key):
    digest = hashlib.sha1((client_key + _WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def encode_frame(opcode, payload, fin=True):
    head = bytearray()
    head.append((0x80 if fin else 0x00) | opcode)
    n = len(payload)
    if n < 126:
        head.append(n)
    elif n < 1 << 16:
        head.append(126)
        head += struct.pack(">H", n)
    else:
        head.append(127)
        head += struct.pack(">Q", n)
    return bytes(head) + payload


async def _read_frame(reader):
    try:
        hdr = await reader.readexactly(2)
    except (asyncio.IncompleteReadError, ConnectionResetError):
        raise _SocketClosed
    fin = bool(hdr[0] & 0x80)
    opcode = hdr[0] & 0x0F
    masked = bool(hdr[1] & 0x80)
    length = hdr[1] & 0x7F
    if length == 126:
        length = struct.unpack(">H", await reader.readexactly(2))[0]
    elif length == 127:
        length = struct.unpack(">Q", await reader.readexactly(8))[0]
    if length > _MAX_MESSAGE:
        raise _SocketClosed
    mask = await reader.readexactly(4) if masked else None
    payload = await reader.readexactly(length) if length else b""
    if mask:
        data = np.frombuffer(payload, dtype=np.uint8)
        key = np.frombuffer((mask * (length // 4 + 1))[:length], dtype=np.uint8)
        payload = (data ^ key).tobytes()
    return fin, opcode, payload


async def _read_message(reader, writer):
    """Assemble one complete (opcode, payload) message, serving pings."""
    opcode = None
    parts = []
    while True:
        fin, op, payload = await _read_frame(reader)
        if op == OP_PING:
            writer.write(encode_frame(OP_PONG, payload))
            await writer.drain()
            continue
        if op == OP_PONG:
            continue
        if op == OP_CLOSE:
            writer.write(encode_frame(OP_CLOSE, payload[:2]))
            await writer.drain()
            raise _SocketClosed
        if op in (OP_TEXT, OP_BINARY):
            opcode = op
            parts.append(payload)
        elif op == OP_CONT and opcode is not None:
            parts.append(payload)
        else:
            raise _SocketClosed
        if fin:
            return opcode, b"".join(parts)


async def _handshake(reader, writer):
    request = await reader.readuntil(b"\r\n\r\n")
    lines = request.decode("latin-1").split("\r\n")
    headers = {}
    for line in lines[1:]:
        if ":" in line:
            name, _, value = line.partition(":")
            headers[name.strip().lower()] = value.strip()
    key = headers.get("sec-websocket-key")
    if headers.get("upgrade", "").lower() != "websocket" or not key:
        writer.write(b"HTTP/1.1 400 Bad Request\r\n\r\n")
        await writer.drain()
        raise _SocketClosed
    response = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(key)}\r\n"
        "\r\n"
    )
    writer.write(response.encode("ascii"))
    await writer.drain()


async def _send_replies(writer, replies):
    for reply in replies:
        if isinstance(reply, (bytes, bytearray)):
            writer.write(encode_frame(OP_BINARY, bytes(reply)))
        else:
            writer.write(encode_frame(OP_TEXT, json.dumps(reply).encode("utf-8")))
    await writer.drain()


async def _serve_connection(reader, writer):
    try:
        await _handshake(reader, writer)
    except (_SocketClosed, asyncio.IncompleteReadError, ConnectionResetError):
        writer.close()
        return

    session = EditSession()
    queue = collections.deque()
    arrived = asyncio.Event()
    closed = False
    loop = asyncio.get_running_loop()

    async def pump():
        nonlocal closed
        try:
            while True:
                opcode, payload = await _read_message(reader, writer)
                if opcode != OP_TEXT:
                    continue  # clients only send JSON control messages
                try:
                    msg = json.loads(payload.decode("utf-8"))
                except (UnicodeDecodeError, json.JSONDecodeError):
                    msg = {"type": "__parse_failure__", "raw": True}
                queue.append(msg)
                arrived.set()
        except (_SocketClosed, asyncio.IncompleteReadError, ConnectionResetError):
            closed = True
            arrived.set()

    pump_task = asyncio.create_task(pump())
    try:
        while True:
            while not queue:
                if closed:
                    return
                arrived.clear()
                await arrived.wait()
            msg = queue.popleft()
            # last-writer-wins: newer queued drags supersede this one
            if isinstance(msg, dict) and msg.get("type") == "drag":
                while queue and isinstance(queue[0], dict) and queue[0].get("type") == "drag":
                    msg = queue.popleft()
            if isinstance(msg, dict) and msg.get("type") == "__parse_failure__":
                replies = [
                    {"type": "error", "code": "bad_payload", "detail": "invalid JSON"}
                ]
            else:
                replies = await loop.run_in_executor(None, session.handle_message, msg)
            await _send_replies(writer, replies)
    except (ConnectionResetError, BrokenPipeError):
        pass
    finally:
        pump_task.cancel()
        writer.close()


async def serve_forever(host="127.0.0.1", port=8765, ready_callback=None):
    server = await asyncio.start_server(_serve_connection, host, port)
    addr = server.sockets[0].getsockname()
    print(f"edit service listening on ws://{addr[0]}:{addr[1]}", flush=True)
    if ready_callback is not None:
        ready_callback(addr)
    async with server:
        await server.serve_forever()


def serve(host="127.0.0.1", port=8765):
    """Blocking entry point for the CLI."""
    asyncio.run(serve_forever(host, port))
