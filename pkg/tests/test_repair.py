import json
import tempfile
import unittest
from pathlib import Path

import pandas as pd

from src.advisor.client import ChatClient
from src.advisor.config import AdvisorConfig
from src.config import ToolSettings
from src.model.core import SafetyProperty
from src.model.errors import PolicyError
from src.parser.prism_parser import ModelSource, load_model, parse_model
from src.policy.engine import load_policy, policy_from_document
from src.repair.analysis import action_redundancy, alternative_rank_sweep, render_analysis
from src.repair.pipeline import run_comparison, run_pipeline
from src.repair.report import render_json, render_report, render_text, write_reports

TESTS = Path(__file__).resolve().parent
DATA = TESTS.parent / "data"
BAD = SafetyProperty("bad")
NO_ENERGY = SafetyProperty("no_energy")

RISKY = """
mdp
module risky
  x : [0..2] init 0;
  [a] x=0 -> 1/2 : (x'=1) + 1/2 : (x'=2);
  [b] x=0 -> (x'=1);
  [a] x>0 -> true;
endmodule
label "bad" = x=1;
"""


class Replies:
    def __init__(self, *replies):
        self.replies = list(replies)

    def __call__(self, request):
        return self.replies.pop(0)


class RepairTestCase(unittest.TestCase):

    def setUp(self):
        self.chain = load_model(DATA / "models" / "chain.prism")
        self.prefers_a = load_policy(DATA / "policies" / "chain_prefers_a.json")
        self.cleaning = load_model(DATA / "models" / "cleaning.prism")
        self.unsafe = load_policy(DATA / "policies" / "cleaning_unsafe.json")
        self.baseline = AdvisorConfig(kind="baseline")
        self.scripted = AdvisorConfig(kind="scripted", script_path=DATA / "scripts" / "cleaning_fix.json")
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def llm_config(self):
        return AdvisorConfig(kind="llm-description", endpoint="https://llm.example/v1", model="test-model",
                             description_path=DATA / "descriptions" / "cleaning_terse.txt",
                             cache_dir=self.tmp / "cache")


class TestPipeline(RepairTestCase):

    def test_chain_baseline_repair(self):
        report = run_pipeline(self.chain, self.prefers_a, BAD, self.baseline)
        self.assertEqual(report.original.value, 0.5)
        self.assertEqual(report.original.exact, "1/2")
        self.assertEqual(report.repaired.value, 0.0)
        self.assertEqual([(o.state, o.action) for o in report.overrides], [([0], "b")])
        self.assertEqual((report.states_before, report.states_after), (3, 2))
        self.assertEqual(report.counts.frontier_size, 1)
        self.assertEqual(report.counts.ok, 1)
        self.assertTrue(report.improved)
        self.assertEqual(report.warnings, [])

    def test_already_safe_policy(self):
        report = run_pipeline(self.chain, load_policy(DATA / "policies" / "chain_prefers_b.json"), BAD,
                              self.baseline)
        self.assertFalse(report.repair_needed)
        self.assertEqual(report.advice, [])
        self.assertEqual(report.repaired.value, 0.0)

    def test_scripted_cleaning_repair(self):
        report = run_pipeline(self.cleaning, self.unsafe, NO_ENERGY, self.scripted)
        self.assertEqual(report.original.exact, "1/2")
        self.assertEqual(report.repaired.exact, "1/8")
        self.assertEqual(report.repaired.value, 0.125)
        self.assertEqual((report.states_before, report.states_after), (6, 11))
        self.assertEqual(report.new_frontier_states, [[1, 0, 1, 0, 0]])
        self.assertIn("1 frontier state(s) appeared after patching: [1, 0, 1, 0, 0]", report.warnings)
        self.assertTrue(any("deadlock" in w for w in report.warnings))

    def test_equal_value_counts_as_improved(self):
        report = run_pipeline(self.cleaning, self.unsafe, NO_ENERGY, self.baseline)
        self.assertEqual([(o.state, o.action) for o in report.overrides], [([0, 0, 1, 1, 0], "idle")])
        self.assertEqual(report.repaired.exact, "1/2")
        self.assertEqual(report.states_after, 7)
        self.assertTrue(report.improved)
        self.assertEqual(report.new_frontier_states, [[0, 0, 1, 0, 0]])

    def test_baseline_on_other_property(self):
        report = run_pipeline(self.cleaning, self.unsafe, SafetyProperty("wrong_room_switch"), self.baseline)
        self.assertEqual([(o.state, o.action) for o in report.overrides], [([1, 0, 1, 1, 0], "clean1_opt1")])
        self.assertEqual(report.repaired.exact, "0")

    def test_second_pass_reextracts_frontier(self):
        report = run_pipeline(self.cleaning, self.unsafe, NO_ENERGY, self.scripted, passes=2)
        self.assertEqual([(a.repair_pass, a.status) for a in report.advice], [(1, "ok"), (2, "format_error")])
        self.assertEqual(report.counts.frontier_size, 2)
        self.assertEqual(len(report.overrides), 1)
        self.assertEqual(report.repaired.exact, "1/8")
        self.assertEqual(report.passes, 2)

    def test_worse_repair_is_flagged(self):
        mdp = parse_model(ModelSource(RISKY)).mdp
        policy = policy_from_document({"type": "tabular", "actions": ["a", "b"], "entries": [
            {"state": [0], "q": [1.0, 0.0]}, {"state": [1], "q": [1.0, 0.0]}, {"state": [2], "q": [1.0, 0.0]},
        ]})
        with self.assertLogs("src.repair.pipeline", level="WARNING"):
            report = run_pipeline(mdp, policy, BAD, self.baseline)
        self.assertFalse(report.improved)
        self.assertEqual(report.repaired.value, 1.0)
        self.assertIn("worse after repair with Baseline: 0.5 -> 1.0", report.warnings)
        self.assertIn("worse after repair (Baseline)", render_text([report]))

    def test_unusable_advice_leaves_state_unpatched(self):
        config = self.llm_config()
        client = ChatClient(config, completion=Replies("I cannot tell what went wrong."))
        report = run_pipeline(self.cleaning, self.unsafe, NO_ENERGY, config, client=client)
        self.assertEqual(report.counts.format_error, 1)
        self.assertEqual(report.overrides, [])
        self.assertEqual(report.repaired.value, report.original.value)
        self.assertEqual(report.states_after, report.states_before)
        self.assertTrue(report.advice[0].prompt_hash)

    def test_baseline_fallback(self):
        config = self.llm_config()
        client = ChatClient(config, completion=Replies("I cannot tell what went wrong."))
        settings = ToolSettings(fallback_baseline=True)
        report = run_pipeline(self.cleaning, self.unsafe, NO_ENERGY, config, settings=settings, client=client)
        [entry] = report.advice
        self.assertEqual((entry.status, entry.alternative), ("ok", "idle"))
        self.assertEqual(entry.explanation, "second-ranked action by policy score (fallback after format_error)")
        self.assertEqual(entry.raw, "I cannot tell what went wrong.")

    def test_llm_advice_is_applied(self):
        config = self.llm_config()
        client = ChatClient(config, completion=Replies("Charge before leaving.\nALTERNATIVE: charge1"))
        report = run_pipeline(self.cleaning, self.unsafe, NO_ENERGY, config, client=client)
        self.assertEqual(report.method, "LLM Desc.")
        self.assertEqual(report.repaired.exact, "1/8")


class TestReports(RepairTestCase):

    def chain_reports(self):
        prism = AdvisorConfig(kind="llm-prism", endpoint="https://llm.example/v1", model="test-model")
        clients = {"llm-prism": ChatClient(prism, completion=Replies("ALTERNATIVE: a"))}
        return run_comparison(self.chain, self.prefers_a, [BAD], [self.baseline, prism], clients=clients)

    def test_golden_text(self):
        report = run_pipeline(self.chain, self.prefers_a, BAD, self.baseline)
        golden = (TESTS / "golden" / "chain_baseline.report.txt").read_text(encoding="utf-8")
        self.assertEqual(render_text([report]), golden)
        self.assertEqual(render_report(report), golden.encode("utf-8"))

    def test_comparison_table(self):
        reports = self.chain_reports()
        self.assertEqual([r.method for r in reports], ["Baseline", "LLM PRISM"])
        # the model's answer repeats the original action
        self.assertEqual(reports[1].counts.no_alternative, 1)
        table = render_text(reports).splitlines()
        self.assertEqual(table[0], "PCTL Query  Original  Baseline  LLM PRISM  Note")
        self.assertEqual(table[2], 'P(F "bad")     0.500     0.000      0.500')

    def test_json(self):
        report = run_pipeline(self.chain, self.prefers_a, BAD, self.baseline)
        text = render_json([report])
        self.assertIn('"frontier_size": 1', text)
        payload = json.loads(text)
        [entry] = payload["reports"][0]["advice"]
        self.assertEqual(entry["pass"], 1)
        self.assertEqual(entry["alternative"], "b")
        self.assertEqual(payload["reports"][0]["original"]["exact"], "1/2")
        self.assertEqual(render_report([report], "json"), text.encode("utf-8"))
        with self.assertRaises(ValueError):
            render_report([report], "xml")

    def test_written_files(self):
        reports = self.chain_reports()
        paths = write_reports(reports, self.tmp / "out", "chain")
        self.assertEqual(sorted(p.name for p in paths), [
            "chain.advice.jsonl", "chain.report.csv", "chain.report.json", "chain.report.txt",
        ])
        frame = pd.read_csv(self.tmp / "out" / "chain.report.csv")
        self.assertEqual(list(frame["Method"]), ["Baseline", "LLM PRISM"])
        self.assertEqual(list(frame["Repaired"]), [0.0, 0.5])
        self.assertEqual(list(frame["Overrides"]), [1, 0])
        transcript = (self.tmp / "out" / "chain.advice.jsonl").read_text(encoding="utf-8").splitlines()
        self.assertEqual([json.loads(line)["method"] for line in transcript], ["Baseline", "LLM PRISM"])


class TestAnalysis(RepairTestCase):

    def test_rank_sweep(self):
        rows = alternative_rank_sweep(self.chain, self.prefers_a, BAD, 3)
        self.assertEqual([r.label for r in rows], ["rank 1", "rank 2", "rank 3"])
        self.assertEqual([r.measurement.value for r in rows], [0.5, 0.0, 0.0])

    def test_rank_sweep_records_policy_errors(self):
        rows = alternative_rank_sweep(self.cleaning, self.unsafe, NO_ENERGY, 2)
        self.assertEqual(rows[0].measurement.value, 0.5)
        self.assertIsNone(rows[1].measurement)
        self.assertIn("[0, 0, 4, 0, 0]", rows[1].error)

    def test_action_redundancy(self):
        rows = action_redundancy(self.chain, self.prefers_a, BAD)
        self.assertEqual([r.label for r in rows], ["without a", "without b"])
        self.assertEqual([r.measurement.value for r in rows], [0.0, 0.5])
        self.assertEqual((rows[0].states, rows[0].deadlocks), (2, 1))
        with self.assertRaises(PolicyError):
            action_redundancy(self.chain, self.prefers_a, BAD, ["jump"])

    def test_render(self):
        text = render_analysis("Rank sweep", alternative_rank_sweep(self.chain, self.prefers_a, BAD, 2))
        lines = text.splitlines()
        self.assertEqual(lines[0], "Rank sweep")
        self.assertIn("Variant", lines[1])
        self.assertIn("0.500", lines[2])
        self.assertEqual(render_analysis("Empty", []), "Empty\n(no variants)\n")


if __name__ == '__main__':
    unittest.main()
