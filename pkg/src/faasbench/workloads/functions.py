"""The benchmark functions themselves.

Each function is deterministic given its parameters and seed. CPU-heavy
loops are delegated to :mod:`faasbench.kernels`.
"""

from __future__ import annotations

import enum
import hashlib
import os
import random
import tempfile
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from faasbench import kernels

# Semiprimes with both factors near 1e6..1e7: trial division takes
# ~0.1-1 s in pure Python and a few ms compiled.
HARD_SEMIPRIMES = (
    1333361000071,    # 1000003 * 1333357
    5333374000049,    # 2000003 * 2666683
    21333681334727,   # 4000037 * 5333371
    85333528000111,   # 8000009 * 10666679
)
DEFAULT_FACT_N = HARD_SEMIPRIMES[1]
DEFAULT_MATRIX_DIM = 128
MAX_MATRIX_DIM = 4096

# Exactly 79 bytes; the key order and spacing are part of the contract.
NETLATENCY_BODY = b'{"success":true,"payload":{"test":"latency test","runtime":"python","v":"1.0"}}'


class WorkloadError(ValueError):
    pass


class WorkloadId(str, enum.Enum):
    FACT = "fact"
    MATRIX_MULT = "matrix"
    NET_LATENCY = "netlatency"
    DISK_IO = "diskio"
    CUSTOM = "custom"


_REQUIRED = {
    WorkloadId.FACT: ("n",),
    WorkloadId.MATRIX_MULT: ("dim", "seed"),
    WorkloadId.NET_LATENCY: (),
    WorkloadId.DISK_IO: ("size", "seed"),
    WorkloadId.CUSTOM: (),
}

_DEFAULTS = {
    WorkloadId.FACT: {"n": DEFAULT_FACT_N},
    WorkloadId.MATRIX_MULT: {"dim": DEFAULT_MATRIX_DIM, "seed": 0},
    WorkloadId.NET_LATENCY: {},
    WorkloadId.DISK_IO: {"size": 1 << 20, "seed": 0},
    WorkloadId.CUSTOM: {},
}


@dataclass(frozen=True)
class WorkloadSpec:
    id: WorkloadId
    params: dict[str, Any] = field(default_factory=dict)
    custom_entry: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "id", WorkloadId(self.id))
        merged = {**_DEFAULTS[self.id], **self.params}
        object.__setattr__(self, "params", merged)
        missing = [k for k in _REQUIRED[self.id] if k not in merged]
        if missing:
            raise WorkloadError(f"{self.id.value}: missing params {missing}")
        if self.id is WorkloadId.CUSTOM and not self.custom_entry:
            raise WorkloadError("custom workload needs custom_entry")

    @classmethod
    def parse(cls, value: str | Mapping | WorkloadSpec) -> WorkloadSpec:
        if isinstance(value, WorkloadSpec):
            return value
        if isinstance(value, str):
            name = value.removeprefix("faas-")
            if name == "matrix-mult":
                name = "matrix"
            if name.startswith("custom/"):
                return cls(WorkloadId.CUSTOM, {}, name.split("/", 1)[1])
            return cls(WorkloadId(name))
        base = cls.parse(value["id"])
        return cls(base.id, dict(value.get("params") or {}),
                   value.get("custom_entry", base.custom_entry))

    @property
    def label(self) -> str:
        if self.id is WorkloadId.CUSTOM:
            return f"custom/{self.custom_entry}"
        return self.id.value

    def work_units(self) -> float:
        """Relative CPU demand used by the simulator (1.0 = default factorization)."""
        if self.id is WorkloadId.FACT:
            largest = int(self.params["n"]) ** 0.5
            return max(largest / DEFAULT_FACT_N ** 0.5, 1e-3)
        if self.id is WorkloadId.MATRIX_MULT:
            return (int(self.params["dim"]) / DEFAULT_MATRIX_DIM) ** 3
        if self.id is WorkloadId.DISK_IO:
            return 0.05 * int(self.params["size"]) / (1 << 20)
        if self.id is WorkloadId.NET_LATENCY:
            return 0.002
        return float(self.params.get("work_units", 1.0))


def run_fact(n: int) -> list[int]:
    if n < 1:
        raise WorkloadError("n must be >= 1")
    return [int(f) for f in kernels.factorize(int(n))]


def generate_matrix(dim: int, seed: int):
    m = kernels.new_u32(dim * dim)
    kernels.splitmix_fill(m, seed)
    return m


def matrix_product(a, b, dim: int):
    if len(a) != dim * dim or len(b) != dim * dim:
        raise WorkloadError("matrix sizes do not match dim")
    c = kernels.new_u32(dim * dim)
    kernels.matmul_u32(a, b, c, dim)
    return c


def matrix_checksum(m) -> int:
    return int(kernels.checksum_u32(m))


def identity_matrix(dim: int):
    m = kernels.new_u32(dim * dim)
    for i in range(dim):
        m[i * dim + i] = 1
    return m


def run_matrix_mult(dim: int = DEFAULT_MATRIX_DIM, seed: int = 0) -> int:
    """Multiply two seeded ``dim x dim`` matrices, return the product checksum.

    Entries are 16-bit values from a splitmix64 stream; products and sums
    wrap modulo 2**32 so the checksum is identical on every platform.
    """
    if dim < 1:
        raise WorkloadError("dim must be >= 1")
    if dim > MAX_MATRIX_DIM:
        raise WorkloadError(f"dim {dim} exceeds the {MAX_MATRIX_DIM} guard")
    a = generate_matrix(dim, seed)
    b = generate_matrix(dim, seed + 1)
    return matrix_checksum(matrix_product(a, b, dim))


def run_netlatency() -> bytes:
    return NETLATENCY_BODY


@dataclass(frozen=True)
class DiskIOResult:
    size: int
    digest: str
    write_ns: int
    read_ns: int


def seeded_bytes(size: int, seed: int) -> bytes:
    return random.Random(seed).randbytes(size)


def run_diskio(size: int, seed: int = 0, scratch_dir: str | None = None) -> DiskIOResult:
    """Write ``size`` seeded bytes to a scratch file, read them back, hash them."""
    if size < 1:
        raise WorkloadError("size must be >= 1")
    data = seeded_bytes(size, seed)
    try:
        fd, path = tempfile.mkstemp(prefix="faas-diskio-", dir=scratch_dir)
    except OSError as exc:
        raise WorkloadError(f"scratch space unavailable: {exc}") from exc
    try:
        t0 = time.perf_counter_ns()
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        t1 = time.perf_counter_ns()
        with open(path, "rb") as fh:
            back = fh.read()
        t2 = time.perf_counter_ns()
    finally:
        try:
            os.unlink(path)
        except OSError:
            pass
    if len(back) != size:
        raise WorkloadError(f"short read: {len(back)} of {size} bytes")
    return DiskIOResult(size, hashlib.sha256(back).hexdigest(), t1 - t0, t2 - t1)


# -- custom functions ---------------------------------------------------------

CustomHandler = Callable[[Mapping[str, str]], Any]
_CUSTOM: dict[str, CustomHandler] = {}


def register_custom(name: str, handler: CustomHandler) -> None:
    _CUSTOM[name] = handler


def custom_handlers() -> dict[str, CustomHandler]:
    return dict(_CUSTOM)


def load_custom_dir(path: str) -> list[str]:
    """Import every ``*.py`` in ``path`` that defines ``handle(params)``.

    The file stem becomes the function name. Code is trusted, not sandboxed.
    """
    import importlib.util
    from pathlib import Path

    loaded = []
    for file in sorted(Path(path).glob("*.py")):
        spec = importlib.util.spec_from_file_location(f"faas_custom_{file.stem}", file)
        module = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(module)
        handler = getattr(module, "handle", None)
        if callable(handler):
            register_custom(file.stem, handler)
            loaded.append(file.stem)
    return loaded


def run_custom(name: str, params: Mapping[str, str] | None = None) -> Any:
    try:
        handler = _CUSTOM[name]
    except KeyError:
        raise WorkloadError(f"no custom function named {name!r}") from None
    return handler(dict(params or {}))


CUSTOM_TEMPLATE = '''"""faas-custom handler template.

Copy into a directory passed to ``faasbench serve functions --custom-dir``.
The file name (without .py) becomes the path /custom/<name>.
"""


def handle(params):
    # params: query-string values as strings
    return {"echo": params}
'''
