"""Local HTTP function server exposing the workloads.

Paths: ``/fact?n=``, ``/matrix?dim=&seed=``, ``/netlatency``,
``/diskio?size=&seed=``, ``/custom/<name>``. Responses are JSON; all but
``/netlatency`` carry an ``elapsed_ms`` timing field. ``/netlatency`` returns
the fixed 79-byte body with a gateway-like header set, about 500 bytes on
the wire in total.
"""

from __future__ import annotations

import json
import time
import uuid

from faasbench._httpio import HttpRequest, HttpResponse, ServerThread, http_date
from faasbench.workloads import functions as fn

# Typical managed-gateway response headers; padding brings the full
# /netlatency response to roughly 500 bytes.
_GATEWAY_HEADERS = {
    "content-type": "application/json; charset=utf-8",
    "cache-control": "private, no-cache, no-store, must-revalidate",
    "x-powered-by": "faasbench",
    "strict-transport-security": "max-age=31536000; includeSubDomains",
    "x-content-type-options": "nosniff",
}


def _json(status: int, payload, extra=None) -> HttpResponse:
    body = json.dumps(payload, separators=(",", ":")).encode()
    return HttpResponse(status, {"content-type": "application/json", **(extra or {})}, body)


def _int_param(req: HttpRequest, name: str, default: int) -> int:
    raw = req.query.get(name)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise fn.WorkloadError(f"{name} must be an integer") from None


def make_handler(loop):
    async def handler(req: HttpRequest) -> HttpResponse:
        if req.method not in ("GET", "POST"):
            return HttpResponse(405, body=b"method not allowed")
        path = req.path.rstrip("/") or "/"
        t0 = time.perf_counter_ns()
        try:
            if path == "/netlatency":
                headers = {
                    **_GATEWAY_HEADERS,
                    "date": http_date(),
                    "x-request-id": str(uuid.uuid4()),
                    "x-amzn-trace-id": "Root=1-" + uuid.uuid4().hex[:8] + "-" + uuid.uuid4().hex[:24],
                }
                return HttpResponse(200, headers, fn.run_netlatency())
            if path == "/fact":
                n = _int_param(req, "n", fn.DEFAULT_FACT_N)
                factors = await loop.run_in_executor(None, fn.run_fact, n)
                result = {"n": n, "factors": factors}
            elif path == "/matrix":
                dim = _int_param(req, "dim", fn.DEFAULT_MATRIX_DIM)
                seed = _int_param(req, "seed", 0)
                checksum = await loop.run_in_executor(None, fn.run_matrix_mult, dim, seed)
                result = {"dim": dim, "seed": seed, "checksum": checksum}
            elif path == "/diskio":
                size = _int_param(req, "size", 1 << 20)
                seed = _int_param(req, "seed", 0)
                r = await loop.run_in_executor(None, fn.run_diskio, size, seed)
                result = {"size": r.size, "digest": r.digest,
                          "write_ms": r.write_ns / 1e6, "read_ms": r.read_ns / 1e6}
            elif path.startswith("/custom/"):
                name = path.split("/", 2)[2]
                if name not in fn.custom_handlers():
                    return _json(404, {"error": f"unknown custom function {name!r}"})
                result = {"result": fn.run_custom(name, req.query)}
            else:
                return _json(404, {"error": f"no workload at {path}"})
        except fn.WorkloadError as exc:
            return _json(400, {"error": str(exc)})
        result["elapsed_ms"] = (time.perf_counter_ns() - t0) / 1e6
        return _json(200, result, {"x-exec-ms": f"{result['elapsed_ms']:.6f}"})

    return handler


def serve_workloads(host: str = "127.0.0.1", port: int = 0) -> ServerThread:
    """Start the function server in a background thread; returns the handle."""
    return ServerThread(make_handler, host, port).start()
