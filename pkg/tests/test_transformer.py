import tempfile
import unittest
from fractions import Fraction
from pathlib import Path

from hypothesis import given, settings, strategies as st

from src.model.core import DEADLOCK, FeatureState
from src.model.errors import StateSpaceLimit
from src.parser.prism_parser import ModelSource, load_model, parse_model
from src.policy.engine import OverrideMap, load_policy, policy_from_document
from src.transformer.dtmc_writer import format_dtmc, write_dtmc
from src.transformer.induced_builder import build_induced, reachable_count
from tests.random_models import generate, oracle_reachable

DATA = Path(__file__).resolve().parent.parent / "data"


class TestInducedBuilder(unittest.TestCase):

    def setUp(self):
        self.chain = load_model(DATA / "models" / "chain.prism")
        self.prefers_a = load_policy(DATA / "policies" / "chain_prefers_a.json")
        self.prefers_b = load_policy(DATA / "policies" / "chain_prefers_b.json")

    def test_chain_under_risky_policy(self):
        dtmc = build_induced(self.chain, self.prefers_a)
        self.assertEqual([s.to_list() for s in dtmc.states], [[0], [1], [2]])
        self.assertEqual(dtmc.chosen_action, ("a", "a", "a"))
        self.assertEqual(dtmc.transitions[0], ((1, Fraction(1, 2)), (2, Fraction(1, 2))))
        self.assertEqual(dtmc.label_set("bad"), frozenset({1}))
        self.assertEqual(dtmc.deadlocks, ())
        self.assertEqual(dtmc.warnings, ())
        self.assertTrue(dtmc.exact)
        self.assertEqual(reachable_count(dtmc), 3)

    def test_chain_under_safe_policy(self):
        dtmc = build_induced(self.chain, self.prefers_b)
        self.assertEqual([s.to_list() for s in dtmc.states], [[0], [2]])
        self.assertEqual(dtmc.label_set("bad"), frozenset())

    def test_override_changes_the_chain(self):
        overrides = OverrideMap([(FeatureState.of(0), "b")])
        dtmc = build_induced(self.chain, self.prefers_a, overrides)
        self.assertEqual(dtmc.chosen_action, ("b", "a"))
        self.assertEqual(len(dtmc), 2)

    def test_rows_are_distributions(self):
        dtmc = build_induced(load_model(DATA / "models" / "cleaning.prism"),
                             load_policy(DATA / "policies" / "cleaning_unsafe.json"))
        for i in range(len(dtmc)):
            self.assertTrue(dtmc.distribution(i).is_valid())
            self.assertEqual(dtmc.index_of(dtmc.states[i]), i)

    def test_deadlocks_become_absorbing(self):
        mdp = parse_model(ModelSource(
            "mdp\nmodule m\n  x : [0..1] init 0;\n  [go] x=0 -> (x'=1);\nendmodule\nlabel \"done\" = x=1;\n"
        )).mdp
        policy = policy_from_document({"type": "tabular", "actions": ["go"],
                                       "entries": [{"state": [0], "q": [1.0]}]})
        with self.assertLogs("src.transformer.induced_builder", level="WARNING") as logs:
            dtmc = build_induced(mdp, policy)
        self.assertEqual(dtmc.deadlocks, (1,))
        self.assertEqual(dtmc.chosen_action[1], DEADLOCK)
        self.assertEqual(dtmc.transitions[1], ((1, Fraction(1)),))
        self.assertEqual(dtmc.warnings, ("1 deadlock state(s) made absorbing: [1]",))
        self.assertIn("1 deadlock state(s) made absorbing", logs.output[0])

    def test_cleaning_deadlocks_are_reported_once(self):
        mdp = load_model(DATA / "models" / "cleaning.prism")
        dtmc = build_induced(mdp, load_policy(DATA / "policies" / "cleaning_unsafe.json"))
        self.assertEqual([s.to_list() for s in dtmc.states], [
            [1, 0, 2, 1, 0], [0, 0, 1, 1, 0], [1, 0, 1, 1, 0],
            [1, 0, 0, 0, 0], [1, 0, 0, 1, 0], [-1, 0, 1, 1, 0],
        ])
        self.assertEqual(dtmc.chosen_action[:3], ("clean1_opt2", "next", "next"))
        self.assertEqual(dtmc.deadlocks, (3, 4, 5))
        self.assertEqual(dtmc.warnings, (
            "3 deadlock state(s) made absorbing: [1, 0, 0, 0, 0], [1, 0, 0, 1, 0], [-1, 0, 1, 1, 0]",
        ))
        self.assertEqual(dtmc.label_set("no_energy"), frozenset({3, 4}))
        self.assertEqual(dtmc.label_set("wrong_room_switch"), frozenset({5}))

    def test_globally_disabled_actions(self):
        dtmc = build_induced(self.chain, self.prefers_a, disabled_actions={"a"})
        self.assertEqual([s.to_list() for s in dtmc.states], [[0], [2]])
        self.assertEqual(dtmc.chosen_action, ("b", DEADLOCK))
        self.assertEqual(dtmc.deadlocks, (1,))

    def test_state_limit(self):
        with self.assertRaises(StateSpaceLimit) as ctx:
            build_induced(self.chain, self.prefers_a, state_limit=2)
        self.assertEqual(ctx.exception.exit_code, 2)
        self.assertEqual(len(build_induced(self.chain, self.prefers_a, state_limit=3)), 3)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=10 ** 6))
    def test_matches_naive_exploration(self, seed):
        model = generate(seed)
        mdp = parse_model(ModelSource(model.text)).mdp
        dtmc = build_induced(mdp, policy_from_document(model.policy_document()))
        order, chain = oracle_reachable(model)
        self.assertEqual([tuple(s) for s in dtmc.states], order)
        for i, state in enumerate(order):
            expected = [(order.index(t), p) for t, p in chain[state]]
            self.assertEqual(list(dtmc.transitions[i]), expected)
        self.assertEqual({tuple(dtmc.states[i]) for i in dtmc.label_set("bad")},
                         {s for s in order if s in model.bad})


class TestDtmcWriter(unittest.TestCase):

    def test_chain_dump(self):
        chain = load_model(DATA / "models" / "chain.prism")
        dtmc = build_induced(chain, load_policy(DATA / "policies" / "chain_prefers_a.json"))
        self.assertEqual(format_dtmc(dtmc), (
            "STATES 3\n"
            "0: a | 1:1/2 2:1/2\n"
            "1: a | 1:1\n"
            "2: a | 2:1\n"
            "LABEL bad: 1\n"
        ))

    def test_empty_label_and_float_probabilities(self):
        mdp = parse_model(ModelSource(
            "mdp\nmodule m\n  x : [0..2] init 0;\n"
            "  [a] x=0 -> 1e-1 : (x'=1) + 9e-1 : (x'=0);\n"
            "  [a] x>0 -> (x'=x);\nendmodule\n"
            "label \"never\" = x=2;\nlabel \"one\" = x=1;\n"
        )).mdp
        policy = policy_from_document({"type": "mlp", "actions": ["a"],
                                       "layers": [{"w": [[0.0]], "b": [1.0], "act": "id"}]})
        text = format_dtmc(build_induced(mdp, policy))
        self.assertEqual(text.splitlines(), [
            "STATES 2",
            "0: a | 1:0.10000000000000001 0:0.90000000000000002",
            "1: a | 1:1",
            "LABEL never:",
            "LABEL one: 1",
        ])

    def test_write_creates_parent_directories(self):
        chain = load_model(DATA / "models" / "chain.prism")
        dtmc = build_induced(chain, load_policy(DATA / "policies" / "chain_prefers_b.json"))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_dtmc(dtmc, Path(tmp) / "out" / "chain.dtmc")
            self.assertEqual(path.read_text(encoding="utf-8"), format_dtmc(dtmc))


if __name__ == '__main__':
    unittest.main()
