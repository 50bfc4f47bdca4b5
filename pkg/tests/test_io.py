import numpy as np
import pytest

from ocapotts.io import (InputError, config_hash, read_labels, read_observations, read_pgm, read_reals,
                         read_table, write_labels, write_manifest, write_reals, write_table)
from ocapotts.lattice import Lattice


def test_label_round_trip_is_one_based(tmp_path):
    lat = Lattice(3, 4)
    z = np.arange(12) % 3
    p = tmp_path / "z.csv"
    write_labels(p, z, lat)
    assert p.read_text().splitlines()[0] == "1,2,3,1"
    z2, lat2 = read_labels(p)
    assert lat2 == lat and np.array_equal(z2, z)


def test_reals_round_trip_exact(tmp_path):
    lat = Lattice(2, 3)
    y = np.array([0.1, 1 / 3, -2.5e-12, 7.0, np.pi, 1e300])
    write_reals(tmp_path / "y.csv", y, lat)
    y2, _ = read_reals(tmp_path / "y.csv")
    assert np.array_equal(y, y2)


@pytest.mark.parametrize("text", ["1,2\n3\n", "1,x\n", "", "0,1\n1,1\n"])
def test_malformed_labels(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(InputError):
        read_labels(p)


def test_missing_file():
    with pytest.raises(InputError):
        read_reals("/nonexistent/y.csv")


def test_blank_cells_allowed_only_when_requested(tmp_path):
    p = tmp_path / "sd.csv"
    p.write_text("100,\n,100\n")
    sd, _ = read_reals(p, allow_missing=True)
    assert np.isnan(sd[1]) and sd[0] == 100
    with pytest.raises(InputError):
        read_reals(p)


def test_pgm_scaled(tmp_path):
    p = tmp_path / "img.pgm"
    p.write_text("P2\n# comment\n3 2\n15\n0 5 10\n15 3 0\n")
    y, lat = read_pgm(p)
    assert lat == Lattice(2, 3)
    assert np.allclose(y, np.array([0, 5, 10, 15, 3, 0]) * 17.0)
    y2, _ = read_observations(p)
    assert np.array_equal(y, y2)
    p.write_text("P5\n1 1\n255\n0\n")
    with pytest.raises(InputError):
        read_pgm(p)


def test_table_and_manifest(tmp_path):
    write_table(tmp_path / "t.csv", ["a", "b"], [[1, 0.5], ["x", np.float64(0.25)]])
    assert read_table(tmp_path / "t.csv") == [{"a": "1", "b": "0.5"}, {"a": "x", "b": "0.25"}]
    write_manifest(tmp_path / "m.json", 7, "seed = 7\n", {"note": 1})
    import json
    data = json.loads((tmp_path / "m.json").read_text())
    assert data["seed"] == 7 and data["config_sha256"] == config_hash("seed = 7\n")
    assert {"numpy", "scipy", "numba", "python", "ocapotts"} <= set(data["versions"])
