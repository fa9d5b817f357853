import os
import subprocess
import sys

import numpy as np
import pytest

from tokcol import _kernels, fastpath
from tokcol.engine import BandwidthViolation, RunConfig, run
from tokcol.experiments import default_corpus
from tokcol.topology import assign_tokens, make_random_connected, make_ring


def floyd_warshall(t):
    n = t.n
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0)
    for u, v in t.edges:
        d[u, v] = d[v, u] = 1
    for m in range(n):
        d = np.minimum(d, d[:, [m]] + d[[m], :])
    return np.where(np.isinf(d), -1, d).astype(np.int64)


@pytest.mark.parametrize("seed", range(8))
def test_apsp_backends_agree(seed):
    n = 5 + 4 * seed
    t = make_random_connected(n, 0.2, seed)
    indptr, indices = t.csr()
    expected = floyd_warshall(t)
    assert np.array_equal(_kernels.apsp_numba(n, indptr, indices), expected)
    assert np.array_equal(_kernels.apsp_numpy(n, indptr, indices), expected)


def test_apsp_disconnected():
    indptr = np.array([0, 1, 2, 2], dtype=np.int64)
    indices = np.array([1, 0], dtype=np.int64)
    for fn in (_kernels.apsp_numba, _kernels.apsp_numpy):
        assert fn(3, indptr, indices)[0, 2] == -1


def _cases():
    for spec in default_corpus(120, 16, seed=3):
        if spec.L > 16:
            continue
        t, a = spec.build()
        for cfg in (RunConfig(), RunConfig(pack_tokens=True), RunConfig(knowledge="know_k")):
            yield t, a, cfg


def test_small_kernel_matches_engine():
    count = 0
    for t, a, cfg in _cases():
        expected = run(t, a, cfg).metrics
        for backend in ("numba", "numpy"):
            assert fastpath.run_metrics(t, a, cfg, backend=backend) == expected
        count += 1
    assert count > 50


def test_small_kernel_timeout_and_no_decision():
    t = make_ring(6, 1)
    a = assign_tokens(t, 6, 5, "distinct", 1)
    cfg = RunConfig(knowledge="none", round_limit=40)
    expected = run(t, a, cfg).metrics
    for backend in ("numba", "numpy"):
        assert fastpath.run_metrics(t, a, cfg, backend=backend) == expected


@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_small_kernel_bandwidth_violation(backend):
    t = make_ring(4, 0)
    a = assign_tokens(t, 4, 8, "distinct", 0)
    cfg = RunConfig(bandwidth_B=8)
    with pytest.raises(BandwidthViolation):
        run(t, a, cfg)
    with pytest.raises(BandwidthViolation):
        fastpath.run_metrics(t, a, cfg, backend=backend)


def test_fast_path_eligibility():
    t = make_ring(4, 0)
    a = assign_tokens(t, 4, 70, "distinct", 0)
    assert not fastpath.eligible(a, RunConfig())
    assert not fastpath.eligible(assign_tokens(t, 4, 8), RunConfig(algorithm="det_large"))
    with pytest.raises(ValueError):
        fastpath.prepare(t, a, RunConfig())


@pytest.mark.parametrize("flag", ["numba", "numpy"])
def test_backend_env_flag(flag):
    env = {**os.environ, "TOKCOL_BACKEND": flag}
    out = subprocess.run([sys.executable, "-c", "from tokcol import _kernels; print(_kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == flag
