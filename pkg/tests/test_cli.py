import csv

import pytest

from dh2.cli import build_parser, main


def test_mesh_octahedron(capsys):
    assert main(["mesh", "--refine", "0"]) == 0
    out = capsys.readouterr().out
    assert "panels: 8" in out and "vertices: 6" in out


def test_mesh_write(tmp_path):
    assert main(["mesh", "--refine", "1", "--write", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "sphere_1.txt").read_text().startswith("18 32")


def test_partition(tmp_path, capsys):
    assert main(["partition", "--refine", "3", "--zeta-re", "2", "--zeta-im", "2",
                 "--leaf-size", "8", "--tree-mode", "tight", "--adaptive", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    fields = dict(line.split(": ", 1) for line in out.splitlines() if ": " in line)
    n_blocks = int(fields["#P"])
    assert n_blocks == int(fields["#P_near"]) + int(fields["#P_far"])
    assert float(fields["#P/n"]) == pytest.approx(n_blocks / 512, abs=1e-4)
    with open(tmp_path / "blocks.csv") as fh:
        assert len(list(csv.DictReader(fh))) == n_blocks


def test_assemble_with_check(tmp_path, capsys):
    assert main(["assemble", "--refine", "2", "--zeta-im", "2", "--order", "3", "--leaf-size", "4",
                 "--check", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "relative spectral error" in out
    assert "level orders (degree): [2," in out
    assert (tmp_path / "operator_stats.csv").exists()


def test_variable_order_above_threshold(tmp_path, capsys):
    assert main(["assemble", "--refine", "2", "--zeta-re", "1e5", "--variable-order",
                 "--out", str(tmp_path)]) == 0
    assert "coupling_scalars: 0" in capsys.readouterr().out


def test_matvec_bench(tmp_path, capsys):
    assert main(["matvec-bench", "--refine", "2", "--repeats", "2", "--out", str(tmp_path)]) == 0
    assert "matvec:" in capsys.readouterr().out


def test_pattern(tmp_path):
    assert main(["pattern", "--refine", "2", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "pattern_n128.ppm").read_bytes().startswith(b"P6\n128 128\n255\n")


def test_exp_nu_blocks(tmp_path, capsys):
    assert main(["exp-nu-blocks", "--refine", "2", "--nus", "0,2,4", "--out", str(tmp_path)]) == 0
    assert "fit: a=" in capsys.readouterr().out
    assert (tmp_path / "blocks_vs_nu.csv").exists()


def test_environment_override(monkeypatch):
    monkeypatch.setenv("DH2_ZETA_IM", "7.5")
    monkeypatch.setenv("DH2_ADAPTIVE", "1")
    a = build_parser().parse_args(["partition"])
    assert a.zeta_im == 7.5 and a.adaptive
    a = build_parser().parse_args(["partition", "--zeta-im", "3"])
    assert a.zeta_im == 3.0


def test_exit_codes(capsys):
    assert main(["bogus"]) == 2
    assert main(["partition", "--eta3", "1.5"]) == 1
    assert main(["assemble", "--refine", "1", "--order", "0"]) == 1
    assert "points per coordinate" in capsys.readouterr().err


@pytest.mark.parametrize("command", ["mesh", "partition", "assemble", "matvec-bench", "exp-blocks",
                                     "exp-conv", "exp-nu-blocks", "exp-nu-error", "pattern"])
def test_help_documents_points(capsys, command):
    assert main([command, "--help"]) == 0
    assert "degree = points - 1" in " ".join(capsys.readouterr().out.split())


def test_unknown_flag_goes_to_stderr(capsys):
    assert main(["mesh", "--no-such-flag"]) == 2
    assert "usage" in capsys.readouterr().err


def test_partition_csv_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["partition", "--refine", "3", "--zeta-im", "8", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "blocks.csv").read_bytes() == (tmp_path / "b" / "blocks.csv").read_bytes()
