import gzip
import math
import struct
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streampca import data_io
from streampca.data_io import Dataset, SyntheticSpec, center, load_csv, load_idx, shard, split, synthetic_gaussian
from streampca.errors import BadMagic, BadSpec, ParseError, RaggedRows, TruncatedFile


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def idx_bytes(n, rows, cols, pixels, magic=0x803):
    return struct.pack(">IIII", magic, n, rows, cols) + bytes(pixels)


def test_csv_layout(tmp_path):
    ds = load_csv(write(tmp_path, "a.csv", "1,2\n3,4\n"))
    np.testing.assert_array_equal(ds.Y, [[1.0, 3.0], [2.0, 4.0]])
    assert ds.d == 2 and ds.n == 2


def test_csv_header_and_blank_lines(tmp_path):
    ds = load_csv(write(tmp_path, "a.csv", "x,y\n1.5,-2e-3\n\n3,4\n"), has_header=True)
    np.testing.assert_array_equal(ds.Y, [[1.5, 3.0], [-0.002, 4.0]])


def test_csv_parse_error_location(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_csv(write(tmp_path, "a.csv", "1,2\n3,abc\n"))
    assert (exc.value.row, exc.value.col) == (2, 2)
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "b.csv", "x,y\n1,2\n"))
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "c.csv", "1,nan\n"))
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "d.csv", "1,2,5\n"), has_header=True)


def test_csv_decimal_comma_is_not_a_number(tmp_path):
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "a.csv", '"1,5",2\n'))


def test_csv_ragged(tmp_path):
    with pytest.raises(RaggedRows) as exc:
        load_csv(write(tmp_path, "a.csv", "1,2\n3\n"))
    assert exc.value.row == 2


def test_idx_minimal(tmp_path):
    p = tmp_path / "img.idx"
    p.write_bytes(idx_bytes(1, 2, 2, [0, 255, 0, 255]))
    np.testing.assert_array_equal(load_idx(p).Y, [[0.0], [1.0], [0.0], [1.0]])


def test_idx_row_major_and_gzip(tmp_path):
    pix = list(range(12))
    p = tmp_path / "img.idx.gz"
    p.write_bytes(gzip.compress(idx_bytes(2, 2, 3, pix)))
    ds = load_idx(p)
    np.testing.assert_allclose(ds.Y[:, 1], np.arange(6, 12) / 255.0)


def test_idx_errors(tmp_path):
    p = tmp_path / "bad"
    p.write_bytes(idx_bytes(1, 2, 2, [0, 0, 0, 0], magic=0x801))
    with pytest.raises(BadMagic):
        load_idx(p)
    p.write_bytes(idx_bytes(3, 2, 2, [0] * 8))
    with pytest.raises(TruncatedFile):
        load_idx(p)
    p.write_bytes(b"\x00\x00")
    with pytest.raises(TruncatedFile):
        load_idx(p)


def test_loaders_are_pure(tmp_path):
    p = write(tmp_path, "a.csv", "1,2,3\n4,5,6\n7,8,10\n")
    a, b = load_csv(p), load_csv(p)
    np.testing.assert_array_equal(a.Y, b.Y)


def test_center_hand_case():
    ds = center(Dataset([[1.0, 3.0], [1.0, 3.0]]))
    np.testing.assert_array_equal(ds.Y, [[-1.0, 1.0], [-1.0, 1.0]])
    np.testing.assert_array_equal(ds.mean, [2.0, 2.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_center_properties(d, n, seed):
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((d, n)) * 10 + rng.standard_normal((d, 1)) * 100
    once = center(Dataset(Y))
    twice = center(once)
    scale = max(np.max(np.linalg.norm(Y, axis=0)), 1.0)
    assert np.max(np.abs(once.Y.mean(axis=1))) <= 1e-8 * scale
    np.testing.assert_allclose(twice.Y, once.Y, atol=1e-12 * scale)
    np.testing.assert_allclose(twice.mean, once.mean, atol=1e-12 * scale)
    # pairwise column differences survive centering up to the rounding of Y - mu
    if n > 1:
        np.testing.assert_allclose(np.diff(once.Y, axis=1), np.diff(Y, axis=1), atol=1e-12 * scale)


def test_dataset_is_read_only():
    ds = Dataset(np.ones((2, 2)))
    with pytest.raises(ValueError):
        ds.Y[0, 0] = 5.0


def test_synthetic_zero_spectrum():
    ds = synthetic_gaussian(SyntheticSpec(3, 10, (0.0, 0.0, 0.0), seed=1))
    np.testing.assert_array_equal(ds.Y, np.zeros((3, 10)))


def test_synthetic_reproducible():
    spec = SyntheticSpec(4, 50, (3.0, 2.0, 1.0, 0.5), seed=9)
    np.testing.assert_array_equal(synthetic_gaussian(spec).Y, synthetic_gaussian(spec).Y)
    other = synthetic_gaussian(SyntheticSpec(4, 50, (3.0, 2.0, 1.0, 0.5), seed=10))
    assert not np.array_equal(other.Y, synthetic_gaussian(spec).Y)


def test_synthetic_spectrum_converges():
    spec = SyntheticSpec(20, 50_000, tuple(range(10, 0, -1)) + (0.0,) * 10, seed=3)
    ds = synthetic_gaussian(spec)
    w = np.linalg.eigvalsh(ds.Y @ ds.Y.T / ds.n)[::-1]
    np.testing.assert_allclose(w[:10], np.arange(10, 0, -1), rtol=0.05)
    assert np.abs(ds.Y.mean(axis=1)).max() < 1e-12


@pytest.mark.parametrize(
    "d,n,spectrum",
    [(2, 5, (1.0,)), (2, 5, (1.0, 2.0)), (2, 5, (1.0, -1.0)), (0, 5, ()), (2, 0, (1.0, 1.0)), (1, 5, (np.inf,))],
)
def test_synthetic_bad_spec(d, n, spectrum):
    with pytest.raises(BadSpec):
        SyntheticSpec(d, n, spectrum)


def test_split_sizes_and_partition():
    ds = Dataset(np.arange(100.0)[None, :])
    train, val = split(ds, 0.1, seed=4)
    assert (train.n, val.n) == (90, 10)
    got = np.concatenate([train.Y[0], val.Y[0]])
    np.testing.assert_array_equal(np.sort(got), np.arange(100.0))
    again = split(ds, 0.1, seed=4)
    np.testing.assert_array_equal(again[0].Y, train.Y)


@pytest.mark.parametrize("f", ["0.1", "0.2", "0.25", "0.3", "0.33", "0.5", "0.7", "0.9", "0.05"])
def test_split_ceiling_rule(f):
    for n in range(1, 301):
        train, val = split(Dataset(np.arange(float(n))[None, :]), float(f), seed=n)
        # ceil((1 - f) n) in exact rational arithmetic
        assert train.n == math.ceil((1 - Fraction(f)) * n), (f, n)
        assert train.n + val.n == n


def test_split_rejects_bad_fraction():
    with pytest.raises(ValueError):
        split(Dataset(np.ones((1, 4))), 1.0, 0)


def test_shard_equal_sizes_drop_tail():
    parts = shard(np.arange(23), 5)
    assert [len(p) for p in parts] == [4] * 5
    np.testing.assert_array_equal(np.concatenate(parts), np.arange(20))
    with pytest.raises(ValueError):
        shard(np.arange(3), 4)
