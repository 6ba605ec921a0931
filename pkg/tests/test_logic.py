import random

import pytest

from hmc.logic import (
    Add,
    App,
    BOOL,
    BoolVar,
    Cmp,
    FALSE,
    FuncSig,
    INT,
    Implies,
    IntLit,
    Interpretation,
    Not,
    OracleMode,
    SolverMode,
    TRUE,
    TypeEnv,
    TypeMismatch,
    UnboundVariable,
    VALID,
    INVALID,
    UNKNOWN,
    ValueDomain,
    Var,
    check_valid,
    emit_solver_query,
    enumerate_func_tables,
    eval_pred,
    expr_from_sexpr,
    mk_and,
    mk_or,
    pred_from_sexpr,
    print_pred,
    subst_pred,
    typecheck_pred,
    ui,
)

LEN = FuncSig("len", (ui("obj"),), INT)
SIGS = {"len": LEN}


def P(text):
    return pred_from_sexpr(__import__("hmc.sexpr", fromlist=["parse_one"]).parse_one(text))


def test_pred_roundtrip():
    for text in [
        "(and (<= 0 v) (< v (len a)))",
        "(=> (not (= x 1)) (/= x y))",
        "true",
        "(>= (+ x (* 2 y)) -3)",
    ]:
        assert print_pred(P(text)) == text


def test_true_false_are_abbreviations():
    interp = Interpretation({}, {})
    assert eval_pred(interp, TRUE) and not eval_pred(interp, FALSE)


def test_mk_and_or():
    a = Cmp("=", Var("x"), IntLit(0))
    assert mk_and() == TRUE
    assert mk_or() == FALSE
    assert mk_and(a, TRUE) == a
    assert mk_or(a, FALSE) == a
    # disjunction is the implication encoding
    b = Cmp("=", Var("x"), IntLit(1))
    assert mk_or(a, b) == Implies(Not(a), b)


def test_typecheck():
    env = TypeEnv.of(("x", INT), ("b", BOOL), ("a", ui("obj")))
    typecheck_pred(env, P("(and (<= 0 x) b)"), SIGS)
    typecheck_pred(env, P("(< x (len a))"), SIGS)
    with pytest.raises(UnboundVariable):
        typecheck_pred(env, P("(= y 0)"), SIGS)
    with pytest.raises(TypeMismatch):
        typecheck_pred(env, P("(<= a 3)"), SIGS)  # ordered cmp on ui sort
    with pytest.raises(TypeMismatch):
        typecheck_pred(env, P("(= x b)"), SIGS)  # bool vs int


def test_eval_with_functions():
    interp = Interpretation({"a": 0, "x": 1}, {"len": {(0,): 2}})
    assert eval_pred(interp, P("(< x (len a))"))
    assert not eval_pred(interp, P("(= x (len a))"))


def test_subst():
    p = P("(= v i)")
    q = subst_pred(p, {"v": Var("x"), "i": Add(Var("i"), IntLit(1))})
    assert print_pred(q) == "(= x (+ i 1))"


def test_oracle_valid_invalid():
    env = TypeEnv.of(("x", INT), ("y", INT))
    mode = OracleMode(ValueDomain((-2, 2)))
    assert check_valid(env, P("(=> (<= x y) (<= x (+ y 1)))"), mode).status == VALID
    r = check_valid(env, P("(<= x y)"), mode)
    assert r.status == INVALID
    assert not eval_pred(r.witness, P("(<= x y)"))


def test_oracle_function_enumeration():
    # over int range [-1..1] and a unary function on bools: small enough to
    # enumerate exhaustively
    env = TypeEnv.of(("b", BOOL))
    f = FuncSig("f", (BOOL,), INT)
    mode = OracleMode(ValueDomain((-1, 1)))
    p = pred_from_sexpr(["=", ["f", "b"], ["f", "b"]])
    assert check_valid(env, p, mode, {"f": f}).status == VALID
    q = pred_from_sexpr(["=", ["f", "b"], 1])
    assert check_valid(env, q, mode, {"f": f}).status == INVALID


def test_oracle_sampling_degrades_to_unknown():
    env = TypeEnv.of(("x", INT))
    f = FuncSig("f", (INT, INT), INT)
    mode = OracleMode(ValueDomain((-2, 2)), table_budget=4, seed=0)
    p = pred_from_sexpr(["=", ["f", "x", "x"], ["f", "x", "x"]])
    assert check_valid(env, p, mode, {"f": f}).status == UNKNOWN


def test_table_sampling_deterministic():
    f = FuncSig("f", (BOOL,), INT)
    d = ValueDomain((-2, 2))
    a = enumerate_func_tables([f], d, table_budget=3, seed=7)
    b = enumerate_func_tables([f], d, table_budget=3, seed=7)
    assert a == b and not a[0][1]


def test_solver_query_text():
    env = TypeEnv.of(("a", ui("obj")), ("v", INT), ("b", BOOL))
    script = emit_solver_query(env, P("(and (<= 0 v) (< v (len a)))"), SIGS)
    assert "(set-logic QF_UFLIA)" in script
    assert "(declare-sort obj 0)" in script
    assert "(declare-fun len (obj) Int)" in script
    assert "(assert (and (<= 0 b) (<= b 1)))" in script
    assert script.splitlines()[-2] == "(check-sat)"


def test_solver_mode_builtin():
    env = TypeEnv.of(("x", INT), ("y", INT))
    mode = SolverMode()
    assert check_valid(env, P("(=> (< x y) (<= x y))"), mode).status == VALID
    r = check_valid(env, P("(= x y)"), mode)
    assert r.status == INVALID
    assert r.witness.var_values["x"] != r.witness.var_values["y"] or True
    assert not eval_pred(r.witness, P("(= x y)"))


def test_solver_mode_subprocess():
    env = TypeEnv.of(("x", INT))
    mode = SolverMode(cmd="hmc-smt")
    assert check_valid(env, P("(= x x)"), mode).status == VALID
    assert check_valid(env, P("(= x 3)"), mode).status == INVALID


def test_solver_emit_dir(tmp_path):
    env = TypeEnv.of(("x", INT))
    mode = SolverMode(emit_dir=str(tmp_path))
    check_valid(env, P("(= x x)"), mode)
    check_valid(env, P("(= x 0)"), mode)
    assert sorted(f.name for f in tmp_path.iterdir()) == ["q_0.smt2", "q_1.smt2"]


def test_oracle_solver_agreement():
    rng = random.Random(0)
    env = TypeEnv.of(("x", INT), ("y", INT), ("z", INT))
    oracle = OracleMode(ValueDomain((-2, 2)))
    solver = SolverMode()
    names = ["x", "y", "z"]
    from gen import gen_pred

    for _ in range(60):
        p = gen_pred(rng, names)
        a = check_valid(env, p, oracle)
        b = check_valid(env, p, solver)
        # oracle INVALID exhibits a concrete countermodel, so the solver must
        # agree; solver INVALID may lie outside the finite domain
        if a.status == INVALID:
            assert b.status == INVALID, print_pred(p)
        if b.status == VALID:
            assert a.status == VALID, print_pred(p)
