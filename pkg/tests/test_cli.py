"""CLI: config grammar, routing, exit codes, artifact formats."""

import json

import pytest

from halfheat.cli import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG_ERROR,
    EXIT_PASS,
    main,
    operator_from_config,
    parse_config,
)
from halfheat.errors import StructuralError

IDENTITY_CFG = """\
# identity operator
N = 1
A.row.1 = 1, 0
A.row.2 = 0, 1
v.d = 0
v.c = 0
grid.nx = 32
grid.ny = 32
grid.Rx = 5
grid.Ry = 5
t.list = 0.5
sources = 0,1
"""

MIXED_CFG = """\
N = 1
A.row.1 = 1, 0.5
A.row.2 = 0.5, 1
v.d = 0
v.c = 1.0
grid.nx = 32
grid.ny = 32
grid.Rx = 4
grid.Ry = 4
t.list = 0.25
sources = 0,1
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfigGrammar:
    def test_parse_comments_and_pairs(self, tmp_path):
        cfg = parse_config(write(tmp_path, "a.cfg", "x = 1 # tail comment\n# line\n\ny = 2\n"))
        assert cfg == {"x": "1", "y": "2"}

    def test_missing_file(self):
        with pytest.raises(StructuralError):
            parse_config("/nonexistent/path.cfg")

    def test_bad_line(self, tmp_path):
        with pytest.raises(StructuralError):
            parse_config(write(tmp_path, "a.cfg", "just words\n"))

    def test_operator_parsing(self, tmp_path):
        cfg = parse_config(write(tmp_path, "op.cfg", IDENTITY_CFG))
        spec = operator_from_config(cfg)
        assert spec.n == 1
        assert spec.gamma == 1.0

    def test_malformed_matrix_row(self, tmp_path):
        cfg = parse_config(write(tmp_path, "op.cfg", "N = 1\nA.row.1 = 1, zebra\nA.row.2 = 0, 1\n"))
        with pytest.raises(StructuralError):
            operator_from_config(cfg)


class TestValidateCommand:
    def test_identity_passes(self, tmp_path, capsys):
        path = write(tmp_path, "op.cfg", IDENTITY_CFG)
        assert main(["validate", path]) == EXIT_PASS
        out = json.loads(capsys.readouterr().out)
        assert out["passed"] is True
        assert out["schema_version"] == 1

    def test_degeneracy_failure_names_invariant(self, tmp_path, capsys):
        bad = IDENTITY_CFG.replace("v.c = 0", "v.c = -1.5")
        path = write(tmp_path, "op.cfg", bad)
        assert main(["validate", path]) == EXIT_CHECK_FAILED
        out = json.loads(capsys.readouterr().out)
        failed = [c["name"] for c in out["checks"] if not c["passed"]]
        assert failed == ["degeneracy"]

    def test_malformed_config_exit_2(self, tmp_path, capsys):
        path = write(tmp_path, "op.cfg", "N = 1\nA.row.1 = 1, zebra\nA.row.2 = 0, 1\n")
        assert main(["validate", path]) == EXIT_CONFIG_ERROR


class TestKernelCommand:
    def test_exact_route(self, tmp_path, capsys):
        path = write(tmp_path, "op.cfg", IDENTITY_CFG)
        out_dir = tmp_path / "out"
        assert main(["kernel", path, "--out", str(out_dir)]) == EXIT_PASS
        index = json.loads((out_dir / "kernel_index.json").read_text())
        assert index["outputs"][0]["method"] == "exact"
        csv_file = out_dir / index["outputs"][0]["file"].split("/")[-1]
        header = csv_file.read_text().splitlines()[0]
        assert header == "t,x1,y1,x2,y2,p,convention"

    def test_solver_route_for_mixed_term(self, tmp_path):
        path = write(tmp_path, "op.cfg", MIXED_CFG)
        out_dir = tmp_path / "out"
        assert main(["kernel", path, "--out", str(out_dir)]) == EXIT_PASS
        index = json.loads((out_dir / "kernel_index.json").read_text())
        assert index["outputs"][0]["method"] == "solver"
        assert index["reduction"]["a"] == pytest.approx([0.5])

    def test_force_numeric(self, tmp_path):
        path = write(tmp_path, "op.cfg", IDENTITY_CFG)
        out_dir = tmp_path / "out"
        assert main(["kernel", path, "--out", str(out_dir), "--force-numeric"]) == EXIT_PASS
        index = json.loads((out_dir / "kernel_index.json").read_text())
        assert index["outputs"][0]["method"] == "solver"

    def test_full_precision_csv(self, tmp_path):
        path = write(tmp_path, "op.cfg", IDENTITY_CFG)
        out_dir = tmp_path / "out"
        main(["kernel", path, "--out", str(out_dir)])
        index = json.loads((out_dir / "kernel_index.json").read_text())
        lines = open(index["outputs"][0]["file"]).readlines()[1:]
        # kernel values round-trip bit-exactly through the 17-digit format
        import numpy as np
        from halfheat.kernels import product_kernel
        from halfheat.operators import ModelOperatorSpec
        m = ModelOperatorSpec(n=1, a=np.zeros(1), c=0.0)
        row = lines[len(lines) // 2].split(",")
        z1 = np.array([float(row[1]), float(row[2])])
        z2 = np.array([float(row[3]), float(row[4])])
        assert float(row[5]) == product_kernel(m, float(row[0]), z1, z2)


class TestVerifyCommand:
    def test_smoke_passes(self, tmp_path, capsys):
        out_dir = tmp_path / "v"
        assert main(["verify", "--probe-set", "smoke", "--out", str(out_dir)]) == EXIT_PASS
        bundle = json.loads((out_dir / "verify.json").read_text())
        assert bundle["passed"] is True
        assert bundle["seed"] == 20240901
        names = {c["name"] for c in bundle["checks"]}
        assert {"conservation_exact", "scaling_exact", "envelope_exact"} <= names

    def test_broken_envelope_fails(self, capsys):
        assert main(["verify", "--probe-set", "smoke", "--break-rate", "0.5"]) \
            == EXIT_CHECK_FAILED
        bundle = json.loads(capsys.readouterr().out)
        failed = [c["name"] for c in bundle["checks"] if not c["passed"]]
        assert "envelope_exact" in failed

    def test_unknown_probe_set_rejected(self):
        with pytest.raises(SystemExit):
            main(["verify", "--probe-set", "bogus"])


GENERAL_CFG = """\
N = 1
A.row.1 = 2, 0.7
A.row.2 = 0.7, 1
v.d = 0.3
v.c = 0.6
grid.nx = 32
grid.ny = 32
grid.Rx = 4
grid.Ry = 4
t.list = 0.5
sources = 0.2,1.0
"""


class TestGeneralOperatorRoute:
    def test_reduced_solve_maps_back(self, tmp_path):
        path = write(tmp_path, "gen.cfg", GENERAL_CFG)
        out_dir = tmp_path / "out"
        assert main(["kernel", path, "--out", str(out_dir)]) == EXIT_PASS
        index = json.loads((out_dir / "kernel_index.json").read_text())
        entry = index["outputs"][0]
        assert entry["method"] == "solver-reduced"
        assert entry["mass_defect"] < 1e-10
        assert index["reduction"]["a"][0] != 0.0
        # the CSV source column is the requested general-coordinates point
        csv_lines = open(entry["file"]).readlines()
        x2, y2 = csv_lines[1].split(",")[3:5]
        assert float(x2) == 0.2 and float(y2) == 1.0


def test_desk_sweep_passes(tmp_path):
    out_dir = tmp_path / "desk"
    assert main(["verify", "--probe-set", "desk", "--out", str(out_dir)]) == EXIT_PASS
    bundle = json.loads((out_dir / "verify.json").read_text())
    assert bundle["passed"] is True
    names = {c["name"] for c in bundle["checks"]}
    assert any(n.startswith("adjoint_solver") for n in names)
    assert "sab_sec6_stable" in names
