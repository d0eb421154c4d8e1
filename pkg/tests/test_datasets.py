import numpy as np
import pytest

from hifi.dataio import DataFormatError, DataValidationError, load_labels, load_series
from hifi.datasets import convert, entity_dirs


def _smd_fixture(root, machine="machine-1-1", d=38, T=40):
    rng = np.random.default_rng(0)
    for sub in ("train", "test", "test_label"):
        (root / sub).mkdir(parents=True)
    np.savetxt(root / "train" / f"{machine}.txt", rng.random((T, d)), delimiter=",", fmt="%.6f")
    np.savetxt(root / "test" / f"{machine}.txt", rng.random((T, d)), delimiter=",", fmt="%.6f")
    labels = np.zeros(T, int)
    labels[10:15] = 1
    np.savetxt(root / "test_label" / f"{machine}.txt", labels, fmt="%d")
    return labels


def test_smd_machine_triple(tmp_path):
    labels = _smd_fixture(tmp_path / "src" / "ServerMachineDataset")
    out = convert("smd", tmp_path / "src", tmp_path / "out")
    assert [p.name for p in out] == ["machine-1-1"]
    train = load_series(out[0] / "train.csv")
    test = load_series(out[0] / "test.csv")
    assert (train.d, test.d, test.T) == (38, 38, 40)
    np.testing.assert_array_equal(load_labels(out[0] / "labels.txt"), labels)


def test_smd_multiple_machines_become_entities(tmp_path):
    root = tmp_path / "src"
    _smd_fixture(root, "machine-1-1")
    rng = np.random.default_rng(1)
    np.savetxt(root / "train" / "machine-2-1.txt", rng.random((20, 38)), delimiter=",")
    np.savetxt(root / "test" / "machine-2-1.txt", rng.random((20, 38)), delimiter=",")
    np.savetxt(root / "test_label" / "machine-2-1.txt", np.zeros(20), fmt="%d")
    convert("smd", root, tmp_path / "out")
    assert [p.name for p in entity_dirs(tmp_path / "out")] == ["machine-1-1", "machine-2-1"]


def test_smd_missing_label_file(tmp_path):
    root = tmp_path / "src"
    _smd_fixture(root)
    (root / "test_label" / "machine-1-1.txt").unlink()
    with pytest.raises(DataFormatError, match="missing"):
        convert("smd", root, tmp_path / "out")


def test_unknown_layout_lists_expected(tmp_path):
    (tmp_path / "src").mkdir()
    with pytest.raises(DataFormatError, match="test_label"):
        convert("smd", tmp_path / "src", tmp_path / "out")


@pytest.mark.parametrize("craft, d", [("smap", 25), ("msl", 55)])
def test_nasa_channels(tmp_path, craft, d):
    root = tmp_path / "src"
    (root / "train").mkdir(parents=True)
    (root / "test").mkdir()
    rng = np.random.default_rng(2)
    np.save(root / "train" / "A-1.npy", rng.random((30, d)))
    np.save(root / "test" / "A-1.npy", rng.random((50, d)))
    np.save(root / "train" / "M-1.npy", rng.random((30, d)))
    np.save(root / "test" / "M-1.npy", rng.random((50, d)))
    (root / "labeled_anomalies.csv").write_text(
        "chan_id,spacecraft,anomaly_sequences,class,num_values\n"
        f'A-1,{"SMAP" if craft == "smap" else "MSL"},"[[5, 9], [40, 41]]","[point]",50\n'
        f'M-1,{"MSL" if craft == "smap" else "SMAP"},"[[0, 1]]","[point]",50\n')
    out = convert(craft, root, tmp_path / "out")
    assert [p.name for p in out] == ["A-1"]
    labels = load_labels(out[0] / "labels.txt")
    assert np.flatnonzero(labels).tolist() == [5, 6, 7, 8, 9, 40, 41]
    assert load_series(out[0] / "test.csv").d == d


def test_generic_passthrough(tmp_path):
    root = tmp_path / "mydata"
    root.mkdir()
    x = np.arange(12, dtype=float).reshape(6, 2) / 4
    np.savetxt(root / "train.csv", x, delimiter=",")
    np.savetxt(root / "test.csv", x[::-1], delimiter=",")
    (root / "labels.txt").write_text("0\n0\n1\n1\n0\n0\n")
    (out,) = convert("generic", root, tmp_path / "out")
    np.testing.assert_array_equal(load_series(out / "train.csv").values, x)
    np.testing.assert_array_equal(load_series(out / "test.csv").values, x[::-1])
    assert load_labels(out / "labels.txt").tolist() == [0, 0, 1, 1, 0, 0]


def test_generic_missing_labels(tmp_path):
    root = tmp_path / "mydata"
    root.mkdir()
    np.savetxt(root / "train.csv", np.zeros((3, 2)), delimiter=",")
    np.savetxt(root / "test.csv", np.zeros((3, 2)), delimiter=",")
    with pytest.raises(DataFormatError, match="labels"):
        convert("generic", root, tmp_path / "out")


def test_generic_label_length_mismatch(tmp_path):
    root = tmp_path / "mydata"
    root.mkdir()
    np.savetxt(root / "train.csv", np.zeros((3, 2)), delimiter=",")
    np.savetxt(root / "test.csv", np.zeros((3, 2)), delimiter=",")
    (root / "labels.txt").write_text("0\n1\n")
    with pytest.raises(DataValidationError):
        convert("generic", root, tmp_path / "out")


def test_unknown_dataset(tmp_path):
    with pytest.raises(ValueError, match="unknown dataset"):
        convert("yahoo", tmp_path, tmp_path / "out")
