"""Benchmark functions and the local function server."""

from __future__ import annotations

import hashlib
import json
import math
import random
import socket
import urllib.error
import urllib.request

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faasbench.workloads import (
    CUSTOM_TEMPLATE,
    HARD_SEMIPRIMES,
    NETLATENCY_BODY,
    WorkloadError,
    WorkloadId,
    WorkloadSpec,
    identity_matrix,
    load_custom_dir,
    matrix_checksum,
    matrix_product,
    register_custom,
    run_custom,
    run_diskio,
    run_fact,
    run_matrix_mult,
    run_netlatency,
    seeded_bytes,
)
from faasbench.workloads.functions import generate_matrix
from faasbench.workloads.server import serve_workloads


def _is_prime(p):
    return p >= 2 and all(p % d for d in range(2, math.isqrt(p) + 1))


@pytest.mark.parametrize("n, factors", [(1, []), (12, [2, 2, 3]), (600851475143, [71, 839, 1471, 6857])])
def test_fact_examples(n, factors):
    assert run_fact(n) == factors


def test_fact_rejects_zero():
    with pytest.raises(WorkloadError):
        run_fact(0)


@given(st.integers(1, 2 ** 40))
@settings(max_examples=60)
def test_fact_product_and_order(n):
    factors = run_fact(n)
    assert math.prod(factors) == n
    assert factors == sorted(factors)
    assert all(_is_prime(p) for p in factors if p < 10 ** 7)


def test_hard_semiprimes_have_two_large_factors():
    for n in HARD_SEMIPRIMES:
        a, b = run_fact(n)
        assert a * b == n and a > 10 ** 6


def _splitmix16(seed, count):
    # reference splitmix64 (Steele, Lea, Flood), low 16 bits of each output
    state, out = seed, []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) % 2 ** 64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % 2 ** 64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % 2 ** 64
        out.append((z ^ (z >> 31)) & 0xFFFF)
    return out


def test_matrix_generator_matches_reference_stream():
    # first splitmix64 output for seed 0 is 0xE220A8397B1DCDAF
    assert list(generate_matrix(2, 0))[0] == 0xCDAF
    assert list(generate_matrix(3, 99)) == _splitmix16(99, 9)


def test_matrix_dim2_seed0_by_hand():
    a, b = _splitmix16(0, 4), _splitmix16(1, 4)
    c = [a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
         a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]]
    expected = sum(x % 2 ** 32 for x in c)
    assert run_matrix_mult(2, 0) == expected == 5989384336


def test_identity_times_a_is_a():
    a = generate_matrix(16, 3)
    assert matrix_checksum(matrix_product(identity_matrix(16), a, 16)) == matrix_checksum(a)


def test_matrix_deterministic_and_guarded():
    assert run_matrix_mult(100, 7) == run_matrix_mult(100, 7)
    assert run_matrix_mult(10, 1) != run_matrix_mult(10, 2)
    with pytest.raises(WorkloadError):
        run_matrix_mult(0)
    with pytest.raises(WorkloadError):
        run_matrix_mult(100_000)
    with pytest.raises(WorkloadError):
        matrix_product(generate_matrix(2, 0), generate_matrix(3, 0), 2)


def test_netlatency_body():
    assert len(run_netlatency()) == 79
    assert run_netlatency() == run_netlatency() == NETLATENCY_BODY
    json.loads(NETLATENCY_BODY)


def test_diskio_digest_matches_generator(tmp_path):
    size = 1 << 20
    r = run_diskio(size, seed=4, scratch_dir=str(tmp_path))
    expected = hashlib.sha256(random.Random(4).randbytes(size)).hexdigest()
    assert r.digest == expected and r.size == size
    assert r.write_ns >= 0 and r.read_ns >= 0
    assert run_diskio(1, 9).digest == hashlib.sha256(seeded_bytes(1, 9)).hexdigest()
    assert list(tmp_path.iterdir()) == []


def test_diskio_errors(tmp_path):
    with pytest.raises(WorkloadError):
        run_diskio(0)
    with pytest.raises(WorkloadError):
        run_diskio(10, scratch_dir=str(tmp_path / "missing"))


def test_workload_spec_parse():
    assert WorkloadSpec.parse("faas-matrix-mult").id is WorkloadId.MATRIX_MULT
    assert WorkloadSpec.parse("fact").params["n"] == HARD_SEMIPRIMES[1]
    custom = WorkloadSpec.parse("custom/echo")
    assert custom.label == "custom/echo"
    with pytest.raises(WorkloadError):
        WorkloadSpec(WorkloadId.CUSTOM)
    spec = WorkloadSpec.parse({"id": "matrix", "params": {"dim": 256}})
    assert spec.work_units() == 8.0


def test_work_units_monotone():
    dims = [WorkloadSpec(WorkloadId.MATRIX_MULT, {"dim": d}).work_units() for d in (32, 64, 128, 256)]
    assert dims == sorted(dims)
    facts = [WorkloadSpec(WorkloadId.FACT, {"n": n}).work_units() for n in sorted(HARD_SEMIPRIMES)]
    assert facts == sorted(facts)


def test_custom_registry_and_template(tmp_path):
    register_custom("double", lambda p: int(p.get("x", "0")) * 2)
    assert run_custom("double", {"x": "21"}) == 42
    with pytest.raises(WorkloadError):
        run_custom("nope")
    (tmp_path / "echo.py").write_text(CUSTOM_TEMPLATE)
    (tmp_path / "helper.py").write_text("X = 1\n")
    assert load_custom_dir(str(tmp_path)) == ["echo"]
    assert run_custom("echo", {"a": "b"}) == {"echo": {"a": "b"}}


@pytest.fixture(scope="module")
def server():
    with serve_workloads() as srv:
        yield srv


def _get(url):
    try:
        with urllib.request.urlopen(url, timeout=10) as resp:
            return resp.status, dict(resp.headers), resp.read()
    except urllib.error.HTTPError as err:
        return err.code, dict(err.headers), err.read()


def test_server_netlatency(server):
    code, headers, body = _get(server.url + "/netlatency")
    assert code == 200 and body == NETLATENCY_BODY
    host, port = server.url.removeprefix("http://").split(":")
    with socket.create_connection((host, int(port)), timeout=5) as sock:
        sock.sendall(b"GET /netlatency HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        raw = b""
        while chunk := sock.recv(4096):
            raw += chunk
    assert raw.endswith(NETLATENCY_BODY)
    assert 400 <= len(raw) <= 600


def test_server_workloads(server):
    code, headers, body = _get(server.url + "/fact?n=12")
    assert code == 200
    data = json.loads(body)
    assert data["factors"] == [2, 2, 3] and data["elapsed_ms"] >= 0
    assert float(headers["x-exec-ms"]) >= 0
    code, _, body = _get(server.url + "/matrix?dim=2&seed=0")
    assert json.loads(body)["checksum"] == 5989384336
    code, _, body = _get(server.url + "/diskio?size=64&seed=1")
    assert json.loads(body)["digest"] == hashlib.sha256(seeded_bytes(64, 1)).hexdigest()


def test_server_errors(server):
    assert _get(server.url + "/unknown")[0] == 404
    assert _get(server.url + "/custom/not-registered")[0] == 404
    assert _get(server.url + "/fact?n=abc")[0] == 400
    assert _get(server.url + "/fact?n=0")[0] == 400


def test_server_custom(server):
    register_custom("hello", lambda p: "hi " + p.get("who", "there"))
    code, _, body = _get(server.url + "/custom/hello?who=me")
    assert code == 200 and json.loads(body)["result"] == "hi me"
