"""Minimal HTTP/1.1 over asyncio streams.

Just enough of the protocol for the local function server, the simulator
frontend and the load injector: keep-alive, Content-Length and chunked
bodies, no TLS. Kept dependency-free so the injector's per-request overhead
stays small.
"""

from __future__ import annotations

import asyncio
import logging
import threading
from dataclasses import dataclass, field
from email.utils import formatdate
from typing import Awaitable, Callable
from urllib.parse import parse_qsl, urlsplit

logger = logging.getLogger(__name__)

REASONS = {
    200: "OK", 400: "Bad Request", 404: "Not Found", 405: "Method Not Allowed",
    429: "Too Many Requests", 500: "Internal Server Error", 503: "Service Unavailable",
    504: "Gateway Timeout",
}


class HttpError(Exception):
    pass


@dataclass
class HttpRequest:
    method: str
    path: str
    query: dict[str, str]
    headers: dict[str, str]
    body: bytes = b""


@dataclass
class HttpResponse:
    status: int
    headers: dict[str, str] = field(default_factory=dict)
    body: bytes = b""

    def encode(self, keep_alive: bool = True) -> bytes:
        lines = [f"HTTP/1.1 {self.status} {REASONS.get(self.status, 'Unknown')}"]
        headers = {"content-length": str(len(self.body)), **self.headers}
        if not keep_alive:
            headers["connection"] = "close"
        lines.extend(f"{k}: {v}" for k, v in headers.items())
        return ("\r\n".join(lines) + "\r\n\r\n").encode("latin-1") + self.body


Handler = Callable[[HttpRequest], Awaitable[HttpResponse]]


async def _read_headers(reader: asyncio.StreamReader) -> tuple[str, dict[str, str]] | None:
    try:
        raw = await reader.readuntil(b"\r\n\r\n")
    except asyncio.IncompleteReadError as exc:
        if exc.partial:
            raise HttpError("connection closed mid-header") from None
        return None
    text = raw.decode("latin-1").split("\r\n")
    headers = {}
    for line in text[1:]:
        if not line:
            continue
        k, _, v = line.partition(":")
        headers[k.strip().lower()] = v.strip()
    return text[0], headers


async def _read_body(reader: asyncio.StreamReader, headers: dict[str, str]) -> bytes:
    if headers.get("transfer-encoding", "").lower() == "chunked":
        parts = []
        while True:
            size_line = await reader.readuntil(b"\r\n")
            size = int(size_line.split(b";")[0].strip(), 16)
            if size == 0:
                await reader.readuntil(b"\r\n")
                return b"".join(parts)
            parts.append(await reader.readexactly(size))
            await reader.readexactly(2)
    length = int(headers.get("content-length", 0) or 0)
    return await reader.readexactly(length) if length else b""


def http_date() -> str:
    return formatdate(usegmt=True)


async def _serve_conn(handler: Handler, reader, writer) -> None:
    try:
        while True:
            head = await _read_headers(reader)
            if head is None:
                break
            start, headers = head
            try:
                method, target, _ = start.split(" ", 2)
            except ValueError:
                writer.write(HttpResponse(400, body=b"bad request line").encode(False))
                break
            body = await _read_body(reader, headers)
            parts = urlsplit(target)
            req = HttpRequest(method.upper(), parts.path, dict(parse_qsl(parts.query)), headers, body)
            try:
                resp = await handler(req)
            except Exception:  # noqa: BLE001
                logger.exception("handler failed for %s %s", method, target)
                resp = HttpResponse(500, body=b"internal error")
            keep = headers.get("connection", "").lower() != "close"
            writer.write(resp.encode(keep))
            await writer.drain()
            if not keep:
                break
    except (ConnectionError, asyncio.IncompleteReadError, HttpError):
        pass
    finally:
        writer.close()


class ServerThread:
    """Run an HTTP handler on its own event loop in a daemon thread."""

    def __init__(self, handler_factory: Callable[[asyncio.AbstractEventLoop], Handler],
                 host: str = "127.0.0.1", port: int = 0):
        self._factory = handler_factory
        self.host = host
        self.port = port
        self.loop: asyncio.AbstractEventLoop | None = None
        self._server = None
        self._thread: threading.Thread | None = None
        self._ready = threading.Event()
        self._error: BaseException | None = None

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> ServerThread:
        if self._thread is not None:
            return self
        self._thread = threading.Thread(target=self._run, name="faasbench-http", daemon=True)
        self._thread.start()
        self._ready.wait()
        if self._error is not None:
            raise OSError(f"cannot bind {self.host}:{self.port}: {self._error}") from self._error
        return self

    def _run(self) -> None:
        self.loop = asyncio.new_event_loop()
        asyncio.set_event_loop(self.loop)
        try:
            handler = self._factory(self.loop)
            self._server = self.loop.run_until_complete(asyncio.start_server(
                lambda r, w: _serve_conn(handler, r, w), self.host, self.port,
                reuse_address=True, backlog=1024,
            ))
        except BaseException as exc:  # noqa: BLE001
            self._error = exc
            self._ready.set()
            return
        self.port = self._server.sockets[0].getsockname()[1]
        self._ready.set()
        try:
            self.loop.run_forever()
        finally:
            self._server.close()
            self.loop.run_until_complete(self._server.wait_closed())
            self.loop.close()

    def call(self, fn, *args):
        """Run ``fn(*args)`` on the server loop and wait for the result."""
        async def wrapper():
            return fn(*args)
        return asyncio.run_coroutine_threadsafe(wrapper(), self.loop).result()

    def stop(self) -> None:
        if self.loop is not None and self.loop.is_running():
            self.loop.call_soon_threadsafe(self.loop.stop)
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


# -- client ---------------------------------------------------------------


@dataclass
class ClientResponse:
    status: int
    headers: dict[str, str]
    body: bytes
    size: int


class Connection:
    """One keep-alive client connection."""

    def __init__(self, host: str, port: int):
        self.host = host
        self.port = port
        self._reader = None
        self._writer = None

    async def _ensure(self):
        if self._writer is None or self._writer.is_closing():
            self._reader, self._writer = await asyncio.open_connection(self.host, self.port)

    async def request(self, method: str, target: str, headers: dict[str, str] | None = None,
                      body: bytes = b"") -> ClientResponse:
        await self._ensure()
        head = [f"{method} {target} HTTP/1.1", f"host: {self.host}:{self.port}"]
        if body:
            head.append(f"content-length: {len(body)}")
        head.extend(f"{k}: {v}" for k, v in (headers or {}).items())
        self._writer.write(("\r\n".join(head) + "\r\n\r\n").encode("latin-1") + body)
        try:
            parsed = await _read_headers(self._reader)
            if parsed is None:
                raise ConnectionError("server closed the connection")
            status_line, resp_headers = parsed
            payload = await _read_body(self._reader, resp_headers)
        except BaseException:
            self.close()
            raise
        status = int(status_line.split(" ", 2)[1])
        if resp_headers.get("connection", "").lower() == "close":
            self.close()
        size = len(status_line) + 2 + sum(len(k) + len(v) + 4 for k, v in resp_headers.items()) + 2
        return ClientResponse(status, resp_headers, payload, size + len(payload))

    def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
        self._writer = None
        self._reader = None


def split_url(url: str) -> tuple[str, int, str]:
    parts = urlsplit(url)
    if parts.scheme not in ("http", ""):
        raise ValueError(f"unsupported scheme in {url!r}")
    target = parts.path or "/"
    if parts.query:
        target += "?" + parts.query
    return parts.hostname or "127.0.0.1", parts.port or 80, target


async def fetch(url: str, method: str = "GET", timeout: float = 30.0) -> ClientResponse:
    host, port, target = split_url(url)
    conn = Connection(host, port)
    try:
        return await asyncio.wait_for(
            conn.request(method, target, {"connection": "close"}), timeout)
    finally:
        conn.close()


def fetch_sync(url: str, method: str = "GET", timeout: float = 30.0) -> ClientResponse:
    return asyncio.run(fetch(url, method, timeout))
