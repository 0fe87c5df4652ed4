import json
import math

import numpy as np
import pytest

import coopnr


def test_param_count_paper_config():
    assert coopnr.count_params(coopnr.ModelConfig()) == 160006


def test_bmd_scalar():
    loss, rate = coopnr.bmd_loss(np.array([math.log(3.0)]), np.array([1], dtype=np.uint8))
    assert loss == pytest.approx(math.log2(4.0 / 3.0), abs=1e-12)
    assert rate == pytest.approx(1.0 - loss, abs=1e-15)


def test_qam_roundtrip_and_demap():
    qam = coopnr.Constellation.square_qam(6)
    assert len(qam.points) == 64
    assert np.mean(np.abs(qam.points) ** 2) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, 600, dtype=np.uint8)
    x = qam.map(bits)
    h = np.ones_like(x)
    llr = qam.demap(x, h, 0.01)
    assert llr.shape == (100, 6)
    assert np.array_equal((llr.reshape(-1) > 0).astype(np.uint8), bits)
    y = x + 0.3 * (rng.normal(size=100) + 1j * rng.normal(size=100))
    np.testing.assert_allclose(qam.demap(y, h, 0.2), qam.demap_exhaustive(y, h, 0.2), atol=1e-9)


def test_ldpc_encode_decode():
    code = coopnr.LdpcCode.ieee80211n_r34()
    assert (code.n, code.k) == (648, 486)
    info = np.random.default_rng(1).integers(0, 2, code.k, dtype=np.uint8)
    word = code.encode(info)
    assert code.is_codeword(word)
    decoded, converged, _ = coopnr.decode_min_sum(code, np.where(word == 1, 8.0, -8.0))
    assert converged
    assert np.array_equal(decoded, info)


def test_noise_variance_roundtrip():
    s2 = coopnr.noise_variance_from_ebno(7.0, 6, 0.75)
    assert coopnr.ebno_from_noise_variance(s2, 6, 0.75) == pytest.approx(7.0)


def test_kernel_smooth_constant():
    x = np.arange(0.0, 10.0, 2.0)
    out = coopnr.kernel_smooth(x, np.full(5, 1e-3), np.full(5, 1000, dtype=np.uint64))
    np.testing.assert_allclose(out, 1e-3, rtol=1e-12)


def test_flops_report():
    gflops, blocks = coopnr.estimate_flops(coopnr.ModelConfig())
    assert gflops > 0
    assert sum(blocks.values()) == pytest.approx(gflops / 2e-9)


def test_micro_sweep_deterministic(tmp_path):
    defaults = json.loads(coopnr.sweep_defaults("micro"))
    assert defaults["profile"] == "micro"
    overrides = json.dumps(
        {"receivers": ["ls", "perfect"], "n_ap": [1, 2], "ebno_db": [4.0, 8.0], "iterations": 3, "seeds": [1]}
    )
    a = coopnr.run_sweep("micro", overrides)
    b = coopnr.run_sweep("micro", overrides)
    assert len(a) == 4
    for ca, cb in zip(a, b):
        assert ca.ber == cb.ber
        assert all(0.0 <= v <= 0.5 for v in ca.ber)
    paths = coopnr.write_curves(a, tmp_path, "micro", overrides)
    assert any(p.name == "manifest.json" for p in paths)


def test_short_training_job(tmp_path):
    res = coopnr.train("micro", tmp_path, json.dumps({"steps": 3, "batch": 2, "validate_every": 3}))
    assert res["steps"] == 3
    assert res["checkpoint"].exists()
    curves = coopnr.run_sweep(
        "micro",
        json.dumps(
            {
                "receivers": ["neural"],
                "n_ap": [1],
                "ebno_db": [6.0],
                "iterations": 2,
                "seeds": [1],
                "checkpoint": str(res["checkpoint"]),
            }
        ),
    )
    assert 0.0 <= curves[0].ber[0] <= 1.0
