"""End-to-end checks of the twc binary.

Run by ctest with TWC_BIN, TWC_DATA and TWC_GOLDEN set.
"""

import json
import os
import pathlib
import subprocess
import tempfile
import unittest
import urllib.error
import urllib.request

import jsonschema

TWC = os.environ["TWC_BIN"]
DATA = pathlib.Path(os.environ["TWC_DATA"])
GOLDEN = pathlib.Path(os.environ["TWC_GOLDEN"])

TINY = ["--hidden", "8", "--gat-dim", "4", "--graph-dim", "4", "--mlp-hidden", "4"]


def twc(*args, stdin=None, check=True):
    p = subprocess.run([TWC, *map(str, args)], input=stdin, capture_output=True, text=True, timeout=600)
    if check and p.returncode != 0:
        raise AssertionError(f"twc {' '.join(map(str, args))} -> {p.returncode}\n{p.stderr}")
    return p


def tree(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(pathlib.Path(d).rglob("*")) if p.is_file()}


class Cli(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = pathlib.Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def gen(self, name, *extra):
        twc("gen", "--tier", "easy", "--count", 5, "--seed", 7, "--out", self.tmp / name, "--quiet", *extra)
        return self.tmp / name

    def test_gen_is_deterministic(self):
        a, b = self.gen("a"), self.gen("b")
        self.assertEqual(tree(a), tree(b))
        self.assertEqual(len(list(a.glob("*.twc.json"))), 5)
        other = self.tmp / "c"
        twc("gen", "--tier", "easy", "--count", 5, "--seed", 8, "--out", other)
        self.assertNotEqual(tree(a), tree(other))
        manifest = json.loads((a / "manifest.json").read_text())
        self.assertEqual(manifest["seed"], 7)
        self.assertEqual(manifest["schema_version"], 1)
        self.assertEqual({g["optimal_steps"] for g in manifest["games"]}, {2})

    def test_oracle_run_reports_optimal_steps(self):
        games = self.gen("g")
        report = json.loads(twc("run", "--agent", "oracle", "--games", games, "--json").stdout)
        self.assertEqual(report["metrics"]["steps"]["mean"], 2.0)
        self.assertEqual(report["metrics"]["score"]["mean"], 1.0)
        self.assertEqual(report["config"]["agent"], "oracle")
        for tier in ("medium", "hard"):
            d = self.tmp / tier
            twc("gen", "--tier", tier, "--count", 3, "--out", d)
            opt = [g["optimal_steps"] for g in json.loads((d / "manifest.json").read_text())["games"]]
            r = json.loads(twc("run", "--agent", "oracle", "--games", d, "--json").stdout)
            self.assertAlmostEqual(r["metrics"]["steps"]["mean"], sum(opt) / len(opt), places=12)

    def test_run_is_byte_identical(self):
        games = self.gen("g")
        for n in (1, 2):
            twc("run", "--agent", "commonsense", "--graph", "cdc", "--games", games, "--runs", 2, "--seed", 3,
                "--jobs", n, "--out", self.tmp / f"run{n}.json", "--transcripts", self.tmp / f"tr{n}", *TINY)
        self.assertEqual((self.tmp / "run1.json").read_bytes(), (self.tmp / "run2.json").read_bytes())
        self.assertEqual(tree(self.tmp / "tr1"), tree(self.tmp / "tr2"))

    def test_train_and_eval(self):
        schema = json.loads((DATA / "report.schema.json").read_text())
        args = ["train", "--agents", "text,cdc", "--episodes", 3, "--runs", 2, "--train-games", 2, "--test-games", 2,
                "--quiet", *TINY]
        twc(*args, "--out", self.tmp / "t1")
        twc(*args, "--out", self.tmp / "t2")
        self.assertEqual(tree(self.tmp / "t1"), tree(self.tmp / "t2"))
        report = json.loads((self.tmp / "t1" / "report.json").read_text())
        jsonschema.validate(report, schema)
        self.assertEqual([c["agent"] for c in report["cells"]], ["text", "cdc"])
        curves = (self.tmp / "t1" / report["cells"][0]["curves"]).read_text().splitlines()
        self.assertEqual(curves[0], "episode,mean_score,std_score,mean_steps,std_steps")
        self.assertEqual(len(curves), 4)

        twc("eval", "--report", self.tmp / "t1", "--out", self.tmp / "e1.json", "--quiet")
        twc("eval", "--report", self.tmp / "t1", "--out", self.tmp / "e2.json", "--jobs", 2, "--quiet")
        self.assertEqual((self.tmp / "e1.json").read_bytes(), (self.tmp / "e2.json").read_bytes())
        ev = json.loads((self.tmp / "e1.json").read_text())
        for trained, again in zip(report["cells"], ev["cells"]):
            self.assertEqual(trained["eval"], again["eval"])

    def test_config_overlay_precedence(self):
        cfg = self.tmp / "cfg.json"
        cfg.write_text(json.dumps({"episodes": 2, "runs": 1, "lr": 0.5, "agents": ["text"], "train-games": 1,
                                   "test-games": 1, "hidden": 8, "gat-dim": 4, "graph-dim": 4, "mlp-hidden": 4}))
        twc("train", "--config", cfg, "--lr", "0.001", "--out", self.tmp / "t", "--quiet")
        train = json.loads((self.tmp / "t" / "report.json").read_text())["config"]["train"]
        self.assertEqual(train["episodes"], 2)
        self.assertEqual(train["optimizer"]["lr"], 0.001)
        self.assertEqual(train["entropy_coef"], 0.01)

    def test_stats_matches_golden(self):
        report = json.loads(twc("stats", "--json").stdout)
        self.assertEqual(report["overlap"], json.loads((GOLDEN / "overlap_stats.json").read_text()))
        self.assertIn("seed", report)
        self.assertIn("config", report)

    def test_attention_export(self):
        games = self.gen("g")
        twc("run", "--agent", "cdc", "--games", games, "--transcripts", self.tmp / "tr", *TINY)
        log = sorted((self.tmp / "tr").glob("*.jsonl"))[0]
        twc("attn", "--log", log, "--out", self.tmp / "attn.json")
        out = json.loads((self.tmp / "attn.json").read_text())
        self.assertEqual(len(out["steps"]), len(log.read_text().splitlines()))
        for s in out["steps"]:
            self.assertEqual(sorted(s["weights_per_action"]), sorted(s["admissible"]))
            for w in s["weights_per_action"].values():
                self.assertEqual(len(w), len(s["nodes"]))
                self.assertAlmostEqual(sum(w), 1.0, places=12)

    def test_play_session(self):
        games = self.gen("g")
        game = sorted(games.glob("*.twc.json"))[0]
        spec = json.loads(game.read_text())
        # the oracle's transcript supplies a winning command sequence
        twc("run", "--agent", "oracle", "--games", games, "--transcripts", self.tmp / "tr")
        log = self.tmp / "tr" / f"{spec['id']}_run0.jsonl"
        cmds = [json.loads(l)["action"] for l in log.read_text().splitlines()]
        p = twc("play", game, "--transcript", self.tmp / "play.jsonl", stdin="dance\n" + "\n".join(cmds) + "\n")
        self.assertIn("score 1/1 in 2 steps (optimal 2)", p.stdout)
        self.assertEqual(len((self.tmp / "play.jsonl").read_text().splitlines()), 2)

    def test_error_exit_codes(self):
        p = twc("frobnicate", check=False)
        self.assertEqual(p.returncode, 2)
        p = twc("run", "--games", self.tmp / "missing", check=False)
        self.assertEqual(p.returncode, 2)
        games = self.gen("g")
        p = twc("run", "--agent", "text", "--graph", "cdc", "--games", games, check=False)
        self.assertEqual(p.returncode, 1)
        self.assertRegex(p.stderr.strip(), r"^error: InvalidConfig: [^\n]+$")
        empty = self.tmp / "empty"
        empty.mkdir()
        p = twc("run", "--games", empty, check=False)
        self.assertEqual(p.returncode, 1)
        self.assertTrue(p.stderr.startswith("error: IoError: "))
        p = twc("train", "--gamma", 0, "--out", self.tmp / "x", check=False)
        self.assertEqual(p.returncode, 1)
        self.assertTrue(p.stderr.startswith("error: InvalidConfig: "))

    def test_serve_over_http(self):
        games = self.gen("g")
        proc = subprocess.Popen([TWC, "serve", "--addr", "127.0.0.1:0", "--games", games, "--data-dir",
                                 self.tmp / "sessions", "--quiet"], stdout=subprocess.PIPE, text=True)
        self.addCleanup(proc.stdout.close)
        try:
            line = proc.stdout.readline()
            self.assertTrue(line.startswith("listening on http://"), line)
            base = line.split()[-1]

            def call(path, body=None):
                req = urllib.request.Request(base + path, data=None if body is None else json.dumps(body).encode(),
                                             headers={"Content-Type": "application/json"})
                try:
                    with urllib.request.urlopen(req, timeout=10) as r:
                        return r.status, json.loads(r.read())
                except urllib.error.HTTPError as e:
                    return e.code, json.loads(e.read())

            status, listing = call("/api/games")
            self.assertEqual(status, 200)
            self.assertEqual(len(listing), 5)
            status, s = call("/api/sessions", {"game_id": listing[0]["id"], "annotator": "cli"})
            self.assertEqual(status, 201)
            status, err = call(f"/api/sessions/{s['session_id']}/action", {"action_index": len(s["admissible"])})
            self.assertEqual((status, err["admissible_count"]), (400, len(s["admissible"])))
            self.assertEqual(call("/api/sessions/nope")[0], 404)
        finally:
            proc.terminate()
            proc.wait(timeout=10)
        self.assertEqual(len(list((self.tmp / "sessions" / "sessions").glob("*.jsonl"))), 1)


if __name__ == "__main__":
    unittest.main(verbosity=2)
