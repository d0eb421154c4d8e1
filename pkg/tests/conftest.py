import pytest

from hifi.dataio import save_labels, save_series
from hifi.synthetic import make_synthetic

# small enough for one-epoch CLI runs in a couple of seconds
TINY_FLAGS = ["--w", "16", "--d1", "8", "--d2", "8", "--d3", "16", "--d_k", "4", "--num_heads", "2",
              "--l", "1", "--K", "1", "--k_topk", "3", "--batch_size", "32", "--epochs", "1"]


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    ds = make_synthetic(seed=0, T_train=400, T_test=600, margin=60)
    out = tmp_path_factory.mktemp("synth")
    save_series(ds.train, out / "train.csv")
    save_series(ds.test, out / "test.csv")
    save_labels(ds.labels, out / "labels.txt")
    return out


ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> None:
    """Record and print one acceptance verdict line, then fail the test if needed."""
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
