"""Benchmark functions and the local HTTP function server."""

from faasbench.workloads.functions import (
    CUSTOM_TEMPLATE,
    DEFAULT_FACT_N,
    DEFAULT_MATRIX_DIM,
    HARD_SEMIPRIMES,
    NETLATENCY_BODY,
    DiskIOResult,
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

__all__ = [
    "CUSTOM_TEMPLATE", "DEFAULT_FACT_N", "DEFAULT_MATRIX_DIM", "HARD_SEMIPRIMES",
    "NETLATENCY_BODY", "DiskIOResult", "WorkloadError", "WorkloadId", "WorkloadSpec",
    "identity_matrix", "load_custom_dir", "matrix_checksum", "matrix_product",
    "register_custom", "run_custom", "run_diskio", "run_fact", "run_matrix_mult",
    "run_netlatency", "seeded_bytes",
]
