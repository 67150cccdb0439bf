import numpy as np
import pytest

from fsirnn import io as fio
from fsirnn.estimators import CurveDataset


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestReadDataset:
    def test_round_trip_exact(self, tmp_path, tecator_data):
        fio.write_dataset(tmp_path / "d.csv", tecator_data)
        back = fio.read_dataset(tmp_path / "d.csv")
        assert np.array_equal(back.grid, tecator_data.grid)
        assert np.array_equal(back.curves, tecator_data.curves)
        assert np.array_equal(back.response, tecator_data.response)

    def test_header_detected(self, tmp_path):
        p = write(tmp_path / "d.csv", "t1,t2,t3\n0,1,2\n1,2,3,4\n5,6,7,8\n")
        d = fio.read_dataset(p)
        assert d.grid.tolist() == [0, 1, 2] and d.response.tolist() == [4, 8]

    def test_classification_labels(self, tmp_path):
        p = write(tmp_path / "d.csv", "0,1\n1,2,1\n3,4,2\n")
        d = fio.read_dataset(p, task="classification")
        assert d.response.dtype.kind == "i" and d.n_classes == 2

    def test_fractional_label_rejected(self, tmp_path):
        p = write(tmp_path / "d.csv", "0,1\n1,2,1.5\n")
        with pytest.raises(fio.DataFormatError, match="not an integer"):
            fio.read_dataset(p, task="classification")

    @pytest.mark.parametrize(
        "text,pattern",
        [
            ("0,1,2\n1,2,3,4\n1,2,3\n", "line 3: expected 4 values, found 3"),
            ("0,1,2\n1,x,3,4\n", "line 2: non-numeric value 'x'"),
            ("h\n0,1,2\n1,2,3,nan\n", "line 3: non-finite"),
            ("0,2,1\n1,2,3,4\n", "line 1: grid"),
            ("", "empty file"),
            ("0,1,2\n", "no observations"),
        ],
    )
    def test_errors_carry_line(self, tmp_path, text, pattern):
        with pytest.raises(fio.DataFormatError, match=pattern):
            fio.read_dataset(write(tmp_path / "d.csv", text))


class TestReadCurves:
    def test_response_optional(self, tmp_path):
        grid, C = fio.read_curves(write(tmp_path / "c.csv", "0,1\n1,2\n3,4,9\n"))
        assert C.tolist() == [[1, 2], [3, 4]]

    def test_grid_only(self, tmp_path):
        grid, C = fio.read_curves(write(tmp_path / "c.csv", "0,1,2\n"))
        assert grid.tolist() == [0, 1, 2] and C.shape == (0, 3)

    def test_empty(self, tmp_path):
        grid, C = fio.read_curves(write(tmp_path / "c.csv", ""))
        assert grid is None and C.size == 0


class TestPublicLoaders:
    def test_tecator_layout(self, tmp_path):
        rng = np.random.default_rng(0)
        block = rng.normal(size=(240, 125))
        lines = ["Tecator data set, free text header", ""]
        for row in block:
            for i in range(0, 125, 5):
                lines.append(" ".join(f"{v:.6f}" for v in row[i : i + 5]))
        d = fio.load_tecator(write(tmp_path / "tecator.txt", "\n".join(lines) + "\n"))
        assert d.curves.shape == (215, 100)
        np.testing.assert_allclose(d.curves, block[:215, :100], atol=1e-6)
        np.testing.assert_allclose(d.response, block[:215, 123], atol=1e-6)
        assert d.grid[0] == 850.0 and d.grid[-1] == 1050.0

    def test_tecator_truncated(self, tmp_path):
        with pytest.raises(fio.DataFormatError, match="125"):
            fio.load_tecator(write(tmp_path / "t.txt", "1 2 3\n"))

    def test_phoneme_layout(self, tmp_path):
        header = '"row.names",' + ",".join(f'"x.{i}"' for i in range(1, 257)) + ',"g","speaker"'
        rows = [header]
        for n, g in enumerate(["sh", "aa", "iy", "dcl", "ao", "aa"]):
            rows.append(f'"{n}",' + ",".join(str(n + i / 1000) for i in range(256)) + f',"{g}","train.dr1.x"')
        d = fio.load_phoneme(write(tmp_path / "phoneme.csv", "\n".join(rows) + "\n"))
        assert d.curves.shape == (6, 256)
        assert d.response.tolist() == [5, 1, 4, 3, 2, 1]
        assert d.curves[2, 0] == 2.0

    def test_write_classification_integers(self, tmp_path):
        d = CurveDataset(np.array([0.0, 1.0]), np.eye(2), np.array([1, 2]), "classification")
        fio.write_dataset(tmp_path / "c.csv", d)
        assert (tmp_path / "c.csv").read_text().splitlines()[1] == "1.0,0.0,1"
