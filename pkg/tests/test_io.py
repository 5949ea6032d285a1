import numpy as np
import pytest

from hdbvp import io
from hdbvp.grid import make_grid


@pytest.fixture
def field():
    g = make_grid(1, 2, 8, 2.5, 0.1, 10.0, 5)
    rng = np.random.default_rng(3)
    return g, rng.standard_normal((g.K, g.P, g.d)) + 1j * rng.standard_normal((g.K, g.P, g.d))


def test_binary_roundtrip(tmp_path, field):
    g, f = field
    io.write_dump(tmp_path / "f.bin", g, f)
    g2, f2 = io.read_dump(tmp_path / "f.bin")
    assert g2.same_as(g)
    assert np.array_equal(f2, f)


def test_csv_roundtrip_bitwise(tmp_path, field):
    g, f = field
    io.write_csv(tmp_path / "f.csv", g, f)
    g2, f2 = io.read_csv(tmp_path / "f.csv")
    assert g2.same_as(g)
    assert np.array_equal(f2, f)


def test_bad_payload(tmp_path, field):
    g, f = field
    p = io.write_dump(tmp_path / "f.bin", g, f)
    with open(p, "ab") as fh:
        fh.write(b"\0" * 8)
    with pytest.raises(io.DumpError):
        io.read_dump(p)
    with pytest.raises(FileNotFoundError):
        io.read_dump(tmp_path / "missing.bin")


def test_nearest_slice(field):
    g, _ = field
    assert io.nearest_slice(g, 1.0) == 2
    assert io.nearest_slice(g, 0.09) == 0
