import unittest
from collections import deque
from fractions import Fraction
from pathlib import Path

from hypothesis import given, settings, strategies as st

from src.checker.reachability import check, extract_frontier, states_reaching
from src.checker.solvers import envelope_bytes, solve_elimination, solve_gauss_seidel
from src.model.core import SafetyProperty
from src.model.errors import NoConvergence, UnknownLabel
from src.parser.prism_parser import ModelSource, load_model, parse_model
from src.policy.engine import load_policy, policy_from_document
from src.transformer.induced_builder import build_induced
from tests.random_models import generate, oracle_probability

DATA = Path(__file__).resolve().parent.parent / "data"
BAD = SafetyProperty("bad")

CONSTANT_GO_STAY = {"type": "mlp", "actions": ["go", "stay"],
                    "layers": [{"w": [[0.0], [0.0]], "b": [1.0, 0.0], "act": "id"}]}


def chain_dtmc(policy_file):
    mdp = load_model(DATA / "models" / "chain.prism")
    return build_induced(mdp, load_policy(DATA / "policies" / policy_file))


def loop_dtmc():
    mdp = load_model(DATA / "models" / "loop.prism")
    return build_induced(mdp, policy_from_document(CONSTANT_GO_STAY))


def cleaning_dtmc():
    mdp = load_model(DATA / "models" / "cleaning.prism")
    return build_induced(mdp, load_policy(DATA / "policies" / "cleaning_unsafe.json"))


class TestSolvers(unittest.TestCase):

    def test_elimination_is_exact(self):
        # x0 = 1/2 x1 + 1/4, x1 = 1/3 x0 + 1/3
        rows = [{1: Fraction(1, 2)}, {0: Fraction(1, 3)}]
        rhs = [Fraction(1, 4), Fraction(1, 3)]
        x = solve_elimination(rows, rhs, Fraction(0), Fraction(1))
        self.assertEqual(x, [Fraction(1, 2), Fraction(1, 2)])

    def test_elimination_with_fill_in(self):
        rows = [{1: Fraction(1, 2), 2: Fraction(1, 4)}, {0: Fraction(1, 2)}, {0: Fraction(1, 2), 1: Fraction(1, 4)}]
        rhs = [Fraction(0), Fraction(1, 4), Fraction(1, 8)]
        x = solve_elimination(rows, rhs, Fraction(0), Fraction(1))
        for i, row in enumerate(rows):
            self.assertEqual(x[i], sum((a * x[j] for j, a in row.items()), Fraction(0)) + rhs[i])

    def test_envelope_bytes(self):
        rows = [{1: 0.5}, {0: 0.5}]
        self.assertEqual(envelope_bytes(rows, exact=False), 4 * 16)
        self.assertEqual(envelope_bytes(rows, exact=True), 4 * 160)
        self.assertEqual(envelope_bytes([{}, {}], exact=False), 2 * 16)

    def test_gauss_seidel(self):
        result = solve_gauss_seidel([{0: 0.5}], [0.3])
        self.assertAlmostEqual(float(result.values[0]), 0.6, places=12)
        self.assertEqual(result.solver, "value-iteration")
        with self.assertRaises(NoConvergence):
            solve_gauss_seidel([{0: 0.5}], [0.3], max_sweeps=1)


class TestReachability(unittest.TestCase):

    def test_chain_exact_half(self):
        measurement = check(chain_dtmc("chain_prefers_a.json"), BAD)
        self.assertEqual(measurement.exact, Fraction(1, 2))
        self.assertEqual(measurement.value, 0.5)
        self.assertEqual(measurement.mode, "exact-rational")
        self.assertEqual(measurement.describe(),
                         'P(F "bad") = 0.5 mode=exact-rational solver=elimination exact=1/2')

    def test_safe_policy_is_zero(self):
        measurement = check(chain_dtmc("chain_prefers_b.json"), BAD)
        self.assertEqual(measurement.value, 0.0)
        self.assertEqual(measurement.exact, Fraction(0))

    def test_constant_network_policy(self):
        self.assertEqual(check(chain_dtmc("chain_constant_mlp.json"), BAD).exact, Fraction(1, 2))

    def test_self_loop_geometric_series(self):
        measurement = check(loop_dtmc(), BAD)
        self.assertEqual(measurement.exact, Fraction(3, 5))

    def test_float_mode(self):
        measurement = check(loop_dtmc(), BAD, numeric="float")
        self.assertAlmostEqual(measurement.value, 0.6, places=12)
        self.assertEqual(measurement.mode, "float")
        self.assertIsNone(measurement.exact)

    def test_auto_mode_goes_float_above_exact_limit(self):
        dtmc = loop_dtmc()
        self.assertEqual(check(dtmc, BAD, exact_limit=len(dtmc)).exact, Fraction(3, 5))
        measurement = check(dtmc, BAD, exact_limit=len(dtmc) - 1)
        self.assertEqual(measurement.mode, "float")
        self.assertIsNone(measurement.exact)
        self.assertAlmostEqual(measurement.value, 0.6, places=12)
        self.assertEqual(check(dtmc, BAD, numeric="exact", exact_limit=1).mode, "exact-rational")

    def test_gauss_seidel_fallback(self):
        with self.assertLogs("src.checker.reachability", level="WARNING"):
            measurement = check(loop_dtmc(), BAD, budget_bytes=0)
        self.assertAlmostEqual(measurement.value, 0.6, places=10)
        self.assertEqual((measurement.mode, measurement.solver), ("float", "value-iteration"))
        self.assertEqual(measurement.iterations, 2)
        self.assertIn("iterations=2", measurement.describe())

    def test_no_convergence(self):
        with self.assertRaises(NoConvergence) as ctx:
            check(loop_dtmc(), BAD, budget_bytes=0, max_sweeps=1)
        self.assertEqual(ctx.exception.exit_code, 2)

    def test_initial_state_in_target(self):
        mdp = parse_model(ModelSource(
            "mdp\nmodule m\n  x : [0..1] init 1;\n  [a] true -> (x'=0);\nendmodule\nlabel \"bad\" = x=1;\n"
        )).mdp
        policy = policy_from_document({"type": "tabular", "actions": ["a"],
                                       "entries": [{"state": [0], "q": [0.0]}, {"state": [1], "q": [0.0]}]})
        measurement = check(build_induced(mdp, policy), BAD)
        self.assertEqual((measurement.value, measurement.exact), (1.0, Fraction(1)))

    def test_exact_request_on_float_chain(self):
        mdp = parse_model(ModelSource(
            "mdp\nmodule m\n  x : [0..1] init 0;\n  [a] x=0 -> 2.5e-1 : (x'=1) + 7.5e-1 : (x'=0);\n"
            "  [a] x=1 -> (x'=1);\nendmodule\nlabel \"bad\" = x=1;\n"
        )).mdp
        policy = policy_from_document({"type": "mlp", "actions": ["a"],
                                       "layers": [{"w": [[0.0]], "b": [0.0], "act": "id"}]})
        dtmc = build_induced(mdp, policy)
        with self.assertLogs("src.checker.reachability", level="WARNING"):
            measurement = check(dtmc, BAD, numeric="exact")
        self.assertEqual(measurement.mode, "float")
        self.assertAlmostEqual(measurement.value, 1.0, places=9)

    def test_unknown_label(self):
        with self.assertRaises(UnknownLabel):
            check(chain_dtmc("chain_prefers_a.json"), SafetyProperty("good"))

    def test_cleaning_no_energy(self):
        dtmc = cleaning_dtmc()
        self.assertEqual(check(dtmc, SafetyProperty("no_energy")).exact, Fraction(1, 2))
        self.assertEqual(check(dtmc, SafetyProperty("wrong_room_switch")).exact, Fraction(1, 2))
        self.assertEqual(check(dtmc, SafetyProperty("collision")).exact, Fraction(0))

    def test_states_reaching(self):
        dtmc = cleaning_dtmc()
        self.assertEqual(states_reaching(dtmc, frozenset({3, 4})), {0, 1, 3, 4})


class TestFrontier(unittest.TestCase):

    def assertFrontierCutsTarget(self, dtmc, prop):
        """Dropping the frontier's edges into the target leaves the target unreachable"""
        targets = dtmc.label_set(prop.target_label)
        records = extract_frontier(dtmc, prop)
        cut = {r.index for r in records}
        for record in records:
            self.assertNotIn(record.index, targets)
            self.assertGreater(record.one_step_prob, 0)
        if dtmc.initial in targets:
            return
        seen = {dtmc.initial}
        queue = deque([dtmc.initial])
        while queue:
            i = queue.popleft()
            for j in dtmc.successors(i):
                if i in cut and j in targets:
                    continue
                if j not in seen:
                    seen.add(j)
                    queue.append(j)
        self.assertEqual(seen & targets, set())

    def test_removing_frontier_edges_isolates_target(self):
        cases = [
            (chain_dtmc("chain_prefers_a.json"), BAD),
            (chain_dtmc("chain_prefers_b.json"), BAD),
            (loop_dtmc(), BAD),
        ] + [(cleaning_dtmc(), SafetyProperty(label)) for label in ("no_energy", "wrong_room_switch", "collision")]
        for dtmc, prop in cases:
            with self.subTest(prop=prop.display, states=len(dtmc)):
                self.assertFrontierCutsTarget(dtmc, prop)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=10 ** 6))
    def test_random_frontiers_isolate_target(self, seed):
        model = generate(seed)
        mdp = parse_model(ModelSource(model.text)).mdp
        dtmc = build_induced(mdp, policy_from_document(model.policy_document()))
        self.assertFrontierCutsTarget(dtmc, BAD)

    def test_chain_frontier(self):
        records = extract_frontier(chain_dtmc("chain_prefers_a.json"), BAD)
        self.assertEqual([r.to_dict() for r in records], [
            {"index": 0, "state": [0], "action": "a", "one_step_prob": 0.5, "successor": [1]},
        ])
        self.assertEqual(extract_frontier(chain_dtmc("chain_prefers_b.json"), BAD), [])

    def test_total_mass_and_representative_successor(self):
        dtmc = cleaning_dtmc()
        [record] = extract_frontier(dtmc, SafetyProperty("no_energy"))
        self.assertEqual(record.index, 1)
        self.assertEqual(record.state.to_list(), [0, 0, 1, 1, 0])
        self.assertEqual(record.action, "next")
        self.assertEqual(record.one_step_prob, Fraction(1))
        # both successors carry 1/2; the lower index wins
        self.assertEqual(record.successor.to_list(), [1, 0, 0, 0, 0])

    def test_frontier_ordered_by_index(self):
        [record] = extract_frontier(cleaning_dtmc(), SafetyProperty("wrong_room_switch"))
        self.assertEqual((record.index, record.action), (2, "next"))
        self.assertEqual(record.successor.to_list(), [-1, 0, 1, 1, 0])

    def test_loop_frontier(self):
        [record] = extract_frontier(loop_dtmc(), BAD)
        self.assertEqual(record.one_step_prob, Fraction(3, 10))
        self.assertEqual(record.action, "go")


class TestAgainstDenseOracle(unittest.TestCase):

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=10 ** 6))
    def test_random_models(self, seed):
        model = generate(seed)
        mdp = parse_model(ModelSource(model.text)).mdp
        dtmc = build_induced(mdp, policy_from_document(model.policy_document()))
        dense, exact = oracle_probability(model)

        measurement = check(dtmc, BAD)
        self.assertEqual(measurement.exact, exact)
        floating = check(dtmc, BAD, numeric="float")
        self.assertAlmostEqual(floating.value, dense, delta=1e-9)
        iterative = check(dtmc, BAD, numeric="float", budget_bytes=0)
        self.assertAlmostEqual(iterative.value, dense, delta=1e-8)


if __name__ == '__main__':
    unittest.main()
