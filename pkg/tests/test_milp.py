import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from micro import micro_milp

from stochwaste.milp import (EQ, GE, LE, MilpError, ProblemBuilder, SolverConfig, Status,
                             enumerate_oracle, export_mps, fix_variables, import_solution,
                             read_mps, relative_gap, solve_lp, solve_milp)


def knapsack():
    b = ProblemBuilder("knap")
    x = b.add_vars(4, 0, 1, True, names=[f"item{k}" for k in range(4)])
    b.add_rows([x], [[3, 4, 5, 6]], LE, [10])
    b.add_objective(x, [4, 5, 7, 8])
    return b.build()


class TestBuilder:
    def test_counts_and_names(self):
        p = knapsack()
        assert p.num_vars == 4 and p.num_rows == 1
        assert p.size_report() == {"binary_variables": 4, "continuous_variables": 0,
                                   "equality_constraints": 0, "inequality_constraints": 1}
        assert p.index("item2") == 2
        assert list(p.names) == ["item0", "item1", "item2", "item3"]

    def test_lazy_default_names(self):
        b = ProblemBuilder()
        b.add_vars(3)
        b.add_vars(2, names=lambda k: f"z{k}")
        b.add_rows([[0, 1]], [[1, 1]], LE, [1])
        p = b.build()
        assert list(p.names) == ["v0", "v1", "v2", "z0", "z1"]
        assert p.row_names[0] == "r0"
        assert p.index("z1") == 4

    def test_rejects_unknown_column(self):
        b = ProblemBuilder()
        b.add_vars(2)
        with pytest.raises(MilpError):
            b.add_rows([[0, 5]], [[1, 1]], LE, [1])

    def test_rejects_bad_sense(self):
        b = ProblemBuilder()
        b.add_vars(1)
        with pytest.raises(MilpError):
            b.add_rows([[0]], [[1]], "X", [1])

    def test_add_constraint_accepts_operators(self):
        b = ProblemBuilder()
        x = b.add_var("x", 0, 10)
        b.add_constraint({x: 1.0}, ">=", 2.5, name="low")
        b.set_objective({x: -1.0})
        sol = solve_milp(b.build())
        assert sol.status == Status.OPTIMAL
        assert sol.objective == pytest.approx(-2.5)

    def test_violation_and_integrality(self):
        p = knapsack()
        assert p.max_violation(np.array([1, 1, 1, 0.0])) == pytest.approx(2.0)
        assert p.max_integrality_violation(np.array([0.5, 0, 0, 0])) == pytest.approx(0.5)
        assert p.is_feasible(np.array([1, 1, 0, 0.0]))


class TestLp:
    def test_simplex_matches_highs_on_knapsack_relaxation(self):
        p = knapsack()
        a = solve_lp(p, backend="simplex")
        b = solve_lp(p, backend="highs")
        assert a.status == b.status == "optimal"
        assert a.objective == pytest.approx(b.objective, abs=1e-9)
        # fractional knapsack by value/weight: item 2, item 0, then 2 of item 3's 6 units
        assert a.objective == pytest.approx(7 + 4 + 8 * 2 / 6, rel=1e-9)

    def test_unbounded_and_infeasible(self):
        b = ProblemBuilder()
        x = b.add_vars(2, 0, np.inf)
        b.add_rows([x], [[1, -1]], LE, [1])
        b.add_objective(x, [1, 1])
        p = b.build()
        assert solve_lp(p).status == "unbounded"
        assert solve_milp(p).status == Status.UNBOUNDED
        b2 = ProblemBuilder()
        y = b2.add_vars(1, 0, 1)
        b2.add_rows([y], [[1]], GE, [2])
        assert solve_lp(b2.build()).status == "infeasible"

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            solve_lp(knapsack(), backend="nope")

    @given(st.integers(0, 10_000))
    def test_simplex_agrees_with_highs(self, seed):
        p = micro_milp(seed).relaxed()
        a = solve_lp(p, backend="simplex")
        b = solve_lp(p, backend="highs")
        assert a.status == b.status
        if a.status == "optimal":
            assert a.objective == pytest.approx(b.objective, abs=1e-6, rel=1e-7)
            assert p.max_violation(a.x) <= 1e-7


class TestBranchAndBound:
    def test_knapsack_optimum(self):
        sol = solve_milp(knapsack())
        assert sol.status == Status.OPTIMAL
        assert sol.objective == pytest.approx(13.0)  # items 1 and 3 fill the capacity exactly
        best = max(sum(v for v, take in zip([4, 5, 7, 8], bits) if take)
                   for bits in np.ndindex(2, 2, 2, 2)
                   if sum(w for w, take in zip([3, 4, 5, 6], bits) if take) <= 10)
        assert sol.objective == pytest.approx(best)

    @given(st.integers(0, 100_000))
    def test_matches_oracle(self, seed):
        p = micro_milp(seed)
        a = solve_milp(p)
        o = enumerate_oracle(p)
        assert a.status == o.status
        if o.status == Status.OPTIMAL:
            assert a.objective == pytest.approx(o.objective, abs=1e-6)
            assert p.is_feasible(a.x)

    def test_highs_and_simplex_backends_agree(self):
        for seed in range(15):
            p = micro_milp(seed)
            a = solve_milp(p, SolverConfig(lp_backend="highs"))
            b = solve_milp(p, SolverConfig(lp_backend="simplex"))
            assert a.status == b.status
            if a.status == Status.OPTIMAL:
                assert a.objective == pytest.approx(b.objective, abs=1e-6)

    def test_node_limit_reports_time_limit(self):
        p = micro_milp(3, n_bin=10, n_rows=6)
        sol = solve_milp(p, SolverConfig(max_nodes=1))
        assert sol.status in (Status.TIME_LIMIT, Status.OPTIMAL, Status.INFEASIBLE)
        if sol.status == Status.TIME_LIMIT and sol.has_solution:
            assert sol.gap == pytest.approx(relative_gap(sol.bound, sol.objective))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(relative_gap=0)
        with pytest.raises(ValueError):
            SolverConfig(time_limit=-1)

    def test_gap_formula(self):
        assert relative_gap(110.0, 100.0) == pytest.approx(0.1)
        assert relative_gap(1.0, 0.0) == pytest.approx(1e10)


class TestFixing:
    def test_fix_and_lower_bound(self):
        p = knapsack()
        fixed = fix_variables(p, [3], values=1.0)
        assert solve_milp(fixed).x[3] == pytest.approx(1.0)
        low = fix_variables(p, [0, 1], lower=[1, 1])
        assert np.all(solve_milp(low).x[:2] > 0.5)

    def test_conflicting_fix(self):
        p = knapsack().with_bounds(ub=np.array([0.0, 1, 1, 1]))
        with pytest.raises(MilpError):
            fix_variables(p, [0], lower=[1.0])


class TestOracle:
    def test_refuses_large(self):
        p = micro_milp(1, n_bin=30, n_int=0)
        with pytest.raises(MilpError):
            enumerate_oracle(p)

    def test_general_integers(self):
        b = ProblemBuilder()
        z = b.add_vars(2, -2, 3, True)
        b.add_rows([z], [[1, 1]], LE, [2])
        b.add_objective(z, [2, 1])
        sol = enumerate_oracle(b.build())
        assert sol.objective == pytest.approx(5.0)   # z = (3, -1)


class TestMps:
    def test_round_trip(self):
        for seed in range(20):
            p = micro_milp(seed)
            q = read_mps(export_mps(p).text)
            assert np.allclose(q.c, p.c)
            assert abs(q.A - p.A).max() == 0 if p.A.nnz else q.A.nnz == 0
            assert list(q.sense) == list(p.sense)
            assert np.allclose(q.rhs, p.rhs)
            assert np.array_equal(q.lb, p.lb) and np.array_equal(q.ub, p.ub)
            assert np.array_equal(q.integer, p.integer)
            a, b = solve_milp(p), solve_milp(q)
            assert a.status == b.status

    def test_sections_and_sense(self):
        text = export_mps(knapsack()).text
        for head in ("ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA", "OBJSENSE"):
            assert head in text
        assert "MARKER" in text

    def test_long_names_get_sidecar(self, tmp_path):
        b = ProblemBuilder()
        b.add_vars(1, 0, 1, True, names=["a_rather_long_variable_name"])
        b.add_rows([[0]], [[1]], LE, [1], names=["row_with_a_long_name"])
        b.add_objective([0], [1])
        exp = export_mps(b.build())
        path = exp.write(tmp_path / "m.mps")
        assert exp.sidecar_path(path).exists()
        assert "a_rather_long_variable_name" in exp.renamed.values()

    def test_import_solution(self, tmp_path):
        p = knapsack()
        sol = solve_milp(p)
        text = "\n".join(f"{n} {v}" for n, v in zip(p.names, sol.x))
        got = import_solution(text, p)
        assert got.objective == pytest.approx(sol.objective)

    def test_import_rejects_infeasible(self):
        from stochwaste.milp import SolutionFileError
        p = knapsack()
        with pytest.raises(SolutionFileError):
            import_solution("item0 1\nitem1 1\nitem2 1\nitem3 1\n", p)

    def test_free_format(self):
        text = """NAME t
OBJSENSE
 MAX
ROWS
 N obj
 L c1
COLUMNS
 x obj 1 c1 1
 y obj 2 c1 1
RHS
 rhs c1 4
BOUNDS
 UP bnd x 3
 UP bnd y 1
ENDATA
"""
        p = read_mps(text)
        sol = solve_milp(p)
        assert sol.objective == pytest.approx(3 + 2)
