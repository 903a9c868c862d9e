"""Synthetic corpus and PGM round trips.

Oracle: a plain nested-loop box downsampler and hand-assembled PGM byte
strings.
"""

import numpy as np
import pytest

from harmoq.corpus import (CorpusConfig, generate_corpus, load_pgm, save_pgm)
from harmoq.errors import ConfigError, DataError, IOFormatError


def box_mean_oracle(hr: np.ndarray, factor: int) -> np.ndarray:
    out = np.zeros((hr.shape[0] // factor, hr.shape[1] // factor))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            block = hr[i * factor:(i + 1) * factor, j * factor:(j + 1) * factor]
            out[i, j] = block.mean()
    return out


CFG = CorpusConfig(images=5, eval_images=3, lr_size=8, upscale=2)


def test_generate_corpus_is_deterministic():
    calib_a, eval_a = generate_corpus(CFG, seed=11)
    calib_b, eval_b = generate_corpus(CFG, seed=11)
    for (la, ha), (lb, hb) in zip(calib_a + eval_a, calib_b + eval_b):
        assert np.array_equal(la, lb)
        assert np.array_equal(ha, hb)


def test_generate_corpus_seed_changes_content():
    calib_a, _ = generate_corpus(CFG, seed=11)
    calib_b, _ = generate_corpus(CFG, seed=12)
    assert not np.array_equal(calib_a[0][1], calib_b[0][1])


def test_generate_corpus_counts_and_shapes():
    calib, evals = generate_corpus(CFG, seed=1)
    assert len(calib) == 5 and len(evals) == 3
    for lr, hr in calib + evals:
        assert lr.shape == (8, 8)
        assert hr.shape == (16, 16)


def test_lr_is_box_mean_of_hr():
    calib, evals = generate_corpus(CFG, seed=2)
    for lr, hr in calib + evals:
        assert np.allclose(lr, box_mean_oracle(hr, 2), atol=1e-15)


def test_images_stay_in_unit_range():
    calib, evals = generate_corpus(CorpusConfig(images=8, eval_images=2,
                                                lr_size=8, noise_level=0.3),
                                   seed=3)
    for lr, hr in calib + evals:
        assert hr.min() >= 0.0 and hr.max() <= 1.0
        assert lr.min() >= 0.0 and lr.max() <= 1.0


def test_upscale_one_passthrough():
    calib, _ = generate_corpus(CorpusConfig(images=1, eval_images=0,
                                            lr_size=8, upscale=1), seed=4)
    lr, hr = calib[0]
    assert np.array_equal(lr, hr)


def test_pgm_roundtrip_quantizes_to_eight_bit_grid(tmp_path):
    rng = np.random.default_rng(60)
    img = rng.uniform(0, 1, size=(6, 9))
    path = tmp_path / "img.pgm"
    save_pgm(path, img)
    back = load_pgm(path)
    assert np.array_equal(back, np.rint(img * 255.0) / 255.0)


def test_pgm_known_bytes(tmp_path):
    img = np.array([[0.0, 1.0], [0.5, 0.25]])
    path = tmp_path / "tiny.pgm"
    save_pgm(path, img)
    raw = path.read_bytes()
    # 0.5*255 = 127.5 rounds half to even -> 128
    assert raw == b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64])


def test_pgm_reads_comment_headers(tmp_path):
    path = tmp_path / "commented.pgm"
    body = bytes([10, 20, 30, 40, 50, 60])
    path.write_bytes(b"P5\n# a comment line\n3 2\n# another\n255\n" + body)
    img = load_pgm(path)
    assert img.shape == (2, 3)
    assert np.array_equal(img, np.array([[10, 20, 30], [40, 50, 60]]) / 255.0)


def test_pgm_malformed_files(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P6\n2 2\n255\n" + bytes(4))
    with pytest.raises(IOFormatError):
        load_pgm(p)
    p.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
    with pytest.raises(IOFormatError):
        load_pgm(p)
    p.write_bytes(b"P5\n2 2\n255\n" + bytes(3))
    with pytest.raises(IOFormatError):
        load_pgm(p)
    p.write_bytes(b"P5\n2\n")
    with pytest.raises(IOFormatError):
        load_pgm(p)
    p.write_bytes(b"P5\nx 2\n255\n" + bytes(4))
    with pytest.raises(IOFormatError):
        load_pgm(p)
    p.write_bytes(b"P5\n0 2\n255\n")
    with pytest.raises(DataError):
        load_pgm(p)


def test_save_pgm_rejects_bad_images(tmp_path):
    with pytest.raises(DataError):
        save_pgm(tmp_path / "nan.pgm", np.array([[np.nan]]))


def test_corpus_config_validation():
    with pytest.raises(ConfigError):
        CorpusConfig(images=0)
    with pytest.raises(ConfigError):
        CorpusConfig(eval_images=-1)
    with pytest.raises(ConfigError):
        CorpusConfig(lr_size=3)
    with pytest.raises(ConfigError):
        CorpusConfig(upscale=0)
    with pytest.raises(ConfigError):
        CorpusConfig(edge_density=-1)
    with pytest.raises(ConfigError):
        CorpusConfig(texture_waves=-1)
    with pytest.raises(ConfigError):
        CorpusConfig(noise_level=-0.1)
    assert CorpusConfig(lr_size=10, upscale=3).hr_size == 30
