import json

import numpy as np
import pytest

from spspca import io as sio
from spspca.errors import (
    AllColumnsDropped,
    ConstantColumn,
    InputFileNotFound,
    InvalidConfig,
    NonNumericColumn,
    NonPositivePrice,
    RaggedRows,
)


def write(path, text):
    path.write_text(text)
    return str(path)


class TestLoadCsv:
    def test_basic(self, tmp_path):
        values, names = sio.load_csv(write(tmp_path / "a.csv", "x,y\n1,2\n3,4\n5,6\n"))
        assert names == ["x", "y"]
        np.testing.assert_array_equal(values, [[1, 2], [3, 4], [5, 6]])

    def test_no_header_and_delimiter(self, tmp_path):
        values, names = sio.load_csv(write(tmp_path / "a.csv", "1;2\n3;4\n"), header=False, delimiter=";")
        assert names == ["V1", "V2"]
        assert values.shape == (2, 2)

    def test_drop_column(self, tmp_path):
        path = write(tmp_path / "a.csv", "a,b,c\n1,NA,3\n4,5,6\n")
        with pytest.warns(UserWarning, match="dropped 1"):
            values, names = sio.load_csv(path, na_policy="drop-column")
        assert names == ["a", "c"]
        np.testing.assert_array_equal(values, [[1, 3], [4, 6]])

    def test_strict_rejects(self, tmp_path):
        with pytest.raises(NonNumericColumn):
            sio.load_csv(write(tmp_path / "a.csv", "a,b\n1,NA\n2,3\n"))

    def test_all_dropped(self, tmp_path):
        with pytest.raises(AllColumnsDropped):
            sio.load_csv(write(tmp_path / "a.csv", "a\nx\n"), na_policy="drop-column")

    def test_ragged(self, tmp_path):
        with pytest.raises(RaggedRows):
            sio.load_csv(write(tmp_path / "a.csv", "a,b\n1,2\n3\n"))

    def test_missing(self, tmp_path):
        with pytest.raises(InputFileNotFound):
            sio.load_csv(str(tmp_path / "nope.csv"))

    def test_comment_lines_skipped(self, tmp_path):
        values, _ = sio.load_csv(write(tmp_path / "a.csv", "# seed: 1\na\n1\n2\n"))
        np.testing.assert_array_equal(values, [[1], [2]])

    def test_round_trip(self, tmp_path, rng):
        M = rng.standard_normal((5, 3)) * 10.0 ** rng.integers(-8, 8, (5, 3))
        path = str(tmp_path / "m.csv")
        sio.write_matrix(path, M, [f"r{i}" for i in range(5)], ["a", "b", "c"], meta={"seed": 3})
        back, rows, cols = sio.read_matrix(path)
        assert np.array_equal(back, M)
        assert rows == [f"r{i}" for i in range(5)] and cols == ["a", "b", "c"]
        with pytest.warns(UserWarning, match="variable"):
            values, names = sio.load_csv(path, na_policy="drop-column")
        assert names == ["a", "b", "c"]
        assert np.array_equal(values, M)


class TestLogReturns:
    def test_exponential(self):
        np.testing.assert_allclose(sio.log_returns([1, np.e, np.e**2]), [[1], [1]])

    def test_constant(self):
        np.testing.assert_array_equal(sio.log_returns(np.full((4, 2), 7.0)), 0.0)

    def test_inverse(self, rng):
        P = np.exp(np.cumsum(rng.normal(0, 0.02, (30, 4)), axis=0)) * rng.uniform(10, 100, 4)
        r = sio.log_returns(P)
        assert r.shape == (29, 4)
        rebuilt = P[0] * np.exp(np.vstack([np.zeros(4), np.cumsum(r, axis=0)]))
        np.testing.assert_allclose(rebuilt, P, rtol=1e-10)

    def test_non_positive(self):
        with pytest.raises(NonPositivePrice) as info:
            sio.log_returns([[1.0, 2.0], [1.0, 0.0]])
        assert (info.value.row, info.value.col) == (1, 1)


class TestPreprocess:
    def test_correlation(self, rng):
        X = sio.preprocess(rng.standard_normal((20, 3)) * [1, 5, 50], ["a", "b", "c"], correlation=True)
        np.testing.assert_allclose(X.values.std(axis=0, ddof=1), 1.0)
        np.testing.assert_allclose(X.values.mean(axis=0), 0.0, atol=1e-12)

    def test_constant_column(self):
        with pytest.raises(ConstantColumn):
            sio.preprocess(np.array([[1.0, 2.0], [1.0, 3.0]]), ["a", "b"], correlation=True)

    def test_no_center(self):
        X = sio.preprocess(np.ones((3, 2)), ["a", "b"], center=False)
        assert not X.centered

    def test_returns_then_center(self):
        X = sio.preprocess(np.array([[1.0], [2.0], [8.0]]), ["a"], returns=True)
        assert X.n == 2 and X.centered


class TestFormatting:
    def test_digits(self):
        assert sio.fmt(0.49912345) == "0.49912345000000002"
        assert sio.fmt(0.49912345, sio.HUMAN_DIGITS) == "0.4991"
        assert sio.fmt(-0.0) == "0"
        assert sio.fmt(3) == "3"


class TestRunConfig:
    def test_manifest_round_trip(self, tmp_path):
        cfg = sio.RunConfig(command="fit", generator="lowdim", k=3, cardinality=[4, 4, 4],
                            theta="auto", out=str(tmp_path), seed=9)
        path = tmp_path / "manifest.json"
        sio.write_manifest(path, cfg, ["a.csv"])
        assert sio.read_manifest(path) == cfg
        doc = json.loads(path.read_text())
        assert doc["seed"] == 9 and doc["config"]["k"] == 3 and "out" not in doc["config"]

    def test_one_source(self):
        with pytest.raises(InvalidConfig):
            sio.RunConfig(command="scree")
        with pytest.raises(InvalidConfig):
            sio.RunConfig(command="scree", input="a.csv", generator="lowdim")

    def test_simulate_needs_case(self):
        with pytest.raises(InvalidConfig):
            sio.RunConfig(command="simulate")

    def test_unknown_keys(self):
        with pytest.raises(InvalidConfig):
            sio.RunConfig.from_dict({"command": "simulate", "case": 1, "bogus": 1})
