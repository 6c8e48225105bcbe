import numpy as np
import pytest

from xytomo import dataio, exact
from xytomo.training import MetricsRecord


def make_record(epoch, infid=None):
    return MetricsRecord(epoch=epoch, nll_train=1.25, energy=-1.0,
                         energy_stderr=0.01, epsilon=0.029, infidelity=infid,
                         frac_out_of_sector=0.0, wall_seconds=2.5)


class TestDatasetFile:
    def test_roundtrip_with_comments(self, tmp_path):
        data = exact.Dataset(n_sites=4, samples=np.array(
            [[0, 1, 0, 1], [1, 0, 1, 0]], dtype=np.uint8))
        path = tmp_path / "d.txt"
        dataio.write_dataset(path, data, comments=["generated for a test"])
        text = path.read_text()
        assert text.startswith("# generated for a test\n")
        loaded = dataio.read_dataset(path)
        assert loaded.n_sites == 4
        assert np.array_equal(loaded.samples, data.samples)
        assert loaded.line_numbers.tolist() == [2, 3]

    def test_rejects_non_binary_entries(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0 1 2 0\n")
        with pytest.raises(ValueError, match="0 or 1"):
            dataio.read_dataset(path)

    def test_rejects_ragged_rows(self, tmp_path):
        path = tmp_path / "ragged.txt"
        path.write_text("0 1\n0 1 0\n")
        with pytest.raises(ValueError, match="widths"):
            dataio.read_dataset(path)

    def test_rejects_empty_file(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("# nothing here\n")
        with pytest.raises(ValueError, match="no samples"):
            dataio.read_dataset(path)


class TestMetricsFile:
    def test_roundtrip_with_missing_values(self, tmp_path):
        path = tmp_path / "m.csv"
        dataio.write_metrics(path, [make_record(1, infid=0.5), make_record(2)])
        header = path.read_text().splitlines()[0]
        assert header == "epoch,nll,energy,energy_stderr,epsilon,infidelity,frac_out_sector,seconds"
        rows = dataio.read_metrics(path)
        assert rows[0]["infidelity"] == 0.5
        assert rows[1]["infidelity"] is None
        assert rows[1]["epoch"] == 2
        assert rows[1]["epsilon"] == 0.029

    def test_incremental_writer_matches_batch(self, tmp_path):
        records = [make_record(1), make_record(2)]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        dataio.write_metrics(a, records)
        with dataio.MetricsWriter(b) as sink:
            for record in records:
                sink(record)
        assert a.read_bytes() == b.read_bytes()


class TestLandscapeFiles:
    def test_surface_rows(self, tmp_path):
        path = tmp_path / "s.csv"
        dataio.write_surface(path, [0.0, 1.0], [-1.0, 1.0],
                             np.array([[1.0, 2.0], [3.0, 4.0]]))
        lines = path.read_text().splitlines()
        assert lines[0] == "alpha,beta,loss"
        assert lines[1] == "0.0,-1.0,1.0"
        assert lines[-1] == "1.0,1.0,4.0"

    def test_path_rows(self, tmp_path):
        path = tmp_path / "p.csv"
        dataio.write_path(path, [200, 400], np.array([[0.1, -0.2, 0.5],
                                                      [0.0, 0.0, 0.0]]))
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,alpha,beta,residual_norm"
        assert lines[1] == "200,0.1,-0.2,0.5"
        assert lines[2] == "400,0.0,0.0,0.0"
