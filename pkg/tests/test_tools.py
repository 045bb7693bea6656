import sys
import tarfile
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tools"))

from prepare_planetoid import main as prepare_main
from wsvgae.datasets import load_dataset


def write_fixture(root: Path) -> Path:
    src = root / "raw" / "demo"
    src.mkdir(parents=True)
    # <id> <f0> <f1> <f2> <label>, alphanumeric ids like citeseer's
    (src / "demo.content").write_text(
        "paperA 1 0 1 ml\n"
        "paperB 0 0 1 db\n"
        "paperC 1 1 0 ml\n"
        "paperD 0 1 0 ir\n"
    )
    (src / "demo.cites").write_text(
        "paperA paperB\n"
        "paperB paperC\n"
        "paperC paperA\n"
        "paperD paperA\n"
        "ghost paperA\n"  # dangling id, must be dropped
    )
    return src


class TestPreparePlanetoid:
    def test_directory_conversion_loads_back(self, tmp_path, capsys):
        src = write_fixture(tmp_path)
        data_dir = tmp_path / "data"
        assert prepare_main([str(src), "--name", "demo", "--data-dir", str(data_dir)]) == 0
        out = capsys.readouterr().out
        assert "4 nodes" in out and "4 citation lines kept (1 dropped)" in out

        ds = load_dataset(data_dir, "demo")
        assert ds.graph.n == 4 and ds.graph.m == 4
        assert ds.labels.k == 3
        assert ds.features.f == 3
        # paperA row: features 1 0 1
        assert ds.features.values[0].tolist() == [1.0, 0.0, 1.0]

    def test_tgz_conversion(self, tmp_path):
        src = write_fixture(tmp_path)
        archive = tmp_path / "demo.tgz"
        with tarfile.open(archive, "w:gz") as tar:
            tar.add(src, arcname="demo")
        data_dir = tmp_path / "data"
        assert prepare_main([str(archive), "--data-dir", str(data_dir)]) == 0
        ds = load_dataset(data_dir, "demo")
        assert ds.graph.n == 4 and ds.graph.m == 4
        assert np.array_equal(ds.node_ids, np.arange(4))
