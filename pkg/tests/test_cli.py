import io
import json
from pathlib import Path

from hmc.cli import main

EXAMPLES = Path(__file__).resolve().parent.parent / "examples"
ITERI = str(EXAMPLES / "iteri_mask.hmc")
TWOREAD = str(EXAMPLES / "tworead.hmc")
TWOREAD_IMP = str(EXAMPLES / "tworead.imp")


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


def test_translate_matches_golden():
    code, text = run("translate", ITERI, "--no-clone")
    assert code == 0
    assert text == (EXAMPLES / "iteri_mask.golden.imp").read_text()


def test_translate_emit_imp(tmp_path):
    dest = tmp_path / "out.imp"
    code, text = run("translate", ITERI, "--no-clone", "--emit-imp", str(dest))
    assert code == 0
    assert dest.read_text() == (EXAMPLES / "iteri_mask.golden.imp").read_text()


def test_clone_output():
    code, text = run("clone", TWOREAD)
    assert code == 0
    assert "k.1" in text and "k.2" in text and "c1#1" in text and "c1#2" in text


def test_exec_imp_dichotomy():
    code, text = run("exec", TWOREAD_IMP, "--int-range", "-1..1")
    assert code == 1 and text.startswith("UNSAFE")
    assert "trace:" in text
    code, text = run(
        "exec", TWOREAD_IMP, "--int-range", "-1..1", "--semantics", "imperative"
    )
    assert code == 0 and text.startswith("SAFE")


def test_exec_hmc_clones_first():
    # after cloning, both semantics agree the constraints are unsatisfiable
    for sem in ("relational", "imperative"):
        code, text = run(
            "exec", TWOREAD, "--int-range", "-1..1", "--semantics", sem
        )
        assert code == 1, (sem, text)


def test_check_safe_json():
    code, text = run("check", ITERI, "--json")
    assert code == 0
    data = json.loads(text)
    assert data["verdict"] == "SAFE"
    assert "k1" in data["solution"] and "k2" in data["solution"]
    assert "translate" in data["timings"] and "solve" in data["timings"]


def test_check_unsafe_with_oracle():
    code, text = run("check", TWOREAD, "--oracle", "--int-range", "-1..1")
    assert code == 1 and text.startswith("UNSAFE")


def test_check_inconclusive_without_oracle():
    code, text = run("check", TWOREAD)
    assert code == 2 and text.startswith("INCONCLUSIVE")


SATISFIABLE = """\
(kvar k (v int))
(sub c1 (env) (lhs int (<= 0 v)) (rhs int (kapp k)))
(sub c2 (env (x int (kapp k))) (lhs int true) (rhs int (<= 0 x)))
"""


def test_validate_modes(tmp_path):
    hmc = tmp_path / "sat.hmc"
    hmc.write_text(SATISFIABLE)
    bad = tmp_path / "bad.sol"
    bad.write_text("(solution (k (= v 0)))")
    code, text = run("validate", str(hmc), "--solution", str(bad))
    assert code == 1 and text.startswith("VIOLATED(c1)")
    good = tmp_path / "good.sol"
    good.write_text("(solution (k (<= 0 v)))")
    code, text = run("validate", str(hmc), "--solution", str(good))
    assert code == 0 and text.startswith("SATISFIED")
    code, text = run(
        "validate", str(hmc), "--solution", str(good), "--mode", "oracle",
        "--int-range", "-1..1",
    )
    assert code == 0


def test_validate_reports_witness(tmp_path):
    sol = tmp_path / "s.sol"
    sol.write_text("(solution (k (= v v)))")
    code, text = run("validate", TWOREAD, "--solution", sol.as_posix(), "--json")
    data = json.loads(text)
    assert data["verdict"] == "VIOLATED" and "witness" in data["detail"]


def test_usage_errors():
    code, _ = run("exec", "/nonexistent/file.imp")
    assert code == 3
    code, _ = run("frobnicate")
    assert code == 3


def test_solver_failure_exit_code(tmp_path):
    code, _ = run("check", ITERI, "--smt-cmd", "/nonexistent/solver")
    assert code == 4


def test_emit_smt_dir(tmp_path):
    hmc = tmp_path / "sat.hmc"
    hmc.write_text(SATISFIABLE)
    sol = tmp_path / "sol.sol"
    sol.write_text("(solution (k (<= 0 v)))")
    dest = tmp_path / "queries"
    code, _ = run(
        "validate", str(hmc), "--solution", str(sol), "--emit-smt", str(dest)
    )
    assert code == 0
    assert any(f.suffix == ".smt2" for f in Path(dest).iterdir())
