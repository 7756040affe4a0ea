import pytest
import torch


@pytest.fixture
def float64():
    prev = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(prev)


@pytest.fixture
def write_dataset(tmp_path):
    """Write a dataset directory from ``{split: [(s, r, o, t), ...]}``."""

    def _write(splits, num_entities=10, num_relations=4, stat=True):
        if stat:
            (tmp_path / "stat.txt").write_text(f"{num_entities} {num_relations}\n")
        for name, rows in splits.items():
            text = "".join("\t".join(str(x) for x in row) + "\n" for row in rows)
            (tmp_path / f"{name}.txt").write_text(text)
        return str(tmp_path)

    return _write


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(REPORT):
            terminalreporter.write_line(line)
