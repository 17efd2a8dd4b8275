import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from disttest import cli
from disttest.distinguisher import DistinguishConfig
from disttest.harness import (
    ExperimentSpec,
    InstanceError,
    closeness_trial,
    distinguish_trial,
    parse_csv,
    resolve_instance,
    rows_to_csv,
    rows_to_json,
    run_concentration_suite,
    run_distinguish_sweep,
    run_lowerbound_suite,
    run_ordered,
    run_spec,
    sweep_grid,
    worker_count,
)
from disttest.distributions import PreconditionError, make_hard_pair, norms

TABLE_SCHEMA = {
    "type": "object",
    "required": ["format_version", "rows"],
    "properties": {
        "format_version": {"const": 1},
        "rows": {"type": "array", "items": {"type": "object"}},
    },
}

LOWERBOUND_REPORT_SCHEMA = {
    "type": "object",
    "required": ["games", "ratio_le_8_frac", "error_rate", "helpful_frac", "preconditions"],
    "properties": {
        "games": {"type": "integer", "minimum": 1},
        "ratio_le_8_frac": {"type": "number", "minimum": 0, "maximum": 1},
        "helpful_frac": {"type": "number", "minimum": 0, "maximum": 1},
        "error_rate": {"type": "object", "additionalProperties": {"type": "number"}},
        "preconditions": {"type": "object"},
    },
}


def spec(sub, **kw):
    kw.setdefault("overrides", {"l": "100"})
    return ExperimentSpec(sub, **kw)


class TestInstances:
    def test_generators(self):
        p, q = resolve_instance("gen:hard:64")
        assert (p, q) == make_hard_pair(64)
        p, q = resolve_instance(["gen:same:64"])
        assert p == q
        p, q = resolve_instance("gen:uniform:10")
        assert p == q and p.n == 10

    def test_files(self, tmp_path):
        p, q = make_hard_pair(64)
        (tmp_path / "pair.json").write_text(json.dumps({"p": p.to_json(), "q": q.to_json()}))
        (tmp_path / "p.json").write_text(json.dumps(p.to_json()))
        (tmp_path / "q.json").write_text(json.dumps(q.to_json()))
        assert resolve_instance([str(tmp_path / "pair.json")]) == (p, q)
        assert resolve_instance([str(tmp_path / "p.json"), str(tmp_path / "q.json")]) == (p, q)

    @pytest.mark.parametrize("desc", [["gen:foo:8"], ["gen:hard"], ["/does/not/exist.json"]])
    def test_bad(self, desc):
        with pytest.raises(InstanceError):
            resolve_instance(desc)

    def test_bad_file_contents(self, tmp_path):
        (tmp_path / "x.json").write_text("{not json")
        with pytest.raises(InstanceError):
            resolve_instance([str(tmp_path / "x.json")])
        (tmp_path / "y.json").write_text(json.dumps({"p": {"n": 2, "probs": [0.9, 0.9]}, "q": {"n": 2, "probs": [1, 0]}}))
        with pytest.raises(InstanceError):
            resolve_instance([str(tmp_path / "y.json")])

    def test_infeasible_n(self):
        with pytest.raises(PreconditionError):
            resolve_instance("gen:hard:7")


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentSpec("bogus")
        with pytest.raises(ValueError):
            ExperimentSpec("sweep", format="xml")
        assert ExperimentSpec("sweep", instance="gen:hard:64").instance == ("gen:hard:64",)


class TestTrials:
    def test_rows_rerun_from_seed(self):
        sp = spec("distinguish", instance="gen:hard:1024", trials=6, master_seed=3)
        rows, _ = run_spec(sp, workers=1)
        p, q = make_hard_pair(1024)
        s = norms(p, q).theorem_s
        for r in rows:
            again = distinguish_trial(p, q, s, r["hypothesis"], r["seed"], DistinguishConfig(l=100))
            assert {k: r[k] for k in again} == again

    def test_hypotheses_alternate(self):
        rows, _ = run_spec(spec("distinguish", instance="gen:hard:1024", trials=4), workers=1)
        assert [r["hypothesis"] for r in rows] == ["H1", "H2", "H1", "H2"]
        assert [r["trial_index"] for r in rows] == [0, 1, 2, 3]

    def test_failure_recorded_not_raised(self):
        sp = ExperimentSpec("distinguish", instance="gen:uniform:4", s=10, trials=2)
        rows, _ = run_spec(sp, workers=1)
        assert all(r["failed"] and not r["correct"] for r in rows)

    def test_closeness_rows(self):
        rows, _ = run_spec(spec("closeness", instance="gen:hard:1024", trials=2), workers=1)
        assert [r["case"] for r in rows] == ["same", "different"]
        assert all(r["correct"] for r in rows)
        assert all(r["draws"] <= r["calls"] * r["max_call_bound"] for r in rows)

    def test_pool_matches_serial(self):
        sp = spec("distinguish", instance="gen:hard:1024", trials=4)
        a, _ = run_spec(sp, workers=1)
        b, _ = run_spec(sp, workers=2)
        assert a == b

    def test_run_ordered(self):
        assert run_ordered(pow, [(2, 3), (3, 2)], workers=2) == [8, 9]

    def test_thread_cap(self, monkeypatch):
        monkeypatch.setenv("DISTTEST_THREADS", "1")
        assert worker_count() == 1

    def test_timing_is_opt_in(self):
        rows, _ = run_spec(spec("distinguish", instance="gen:hard:1024", trials=1), workers=1)
        assert "wall_time_ms" not in rows[0]
        sp = spec("distinguish", instance="gen:hard:1024", trials=1, overrides={"l": "100", "timing": "1"})
        rows, _ = run_spec(sp, workers=1)
        assert rows[0]["wall_time_ms"] >= 0


class TestSweep:
    def test_grid(self):
        assert sweep_grid(1000) == [63, 125, 250, 500, 1000, 2000, 4000]

    def test_monotone_on_hard_pair(self):
        rows = run_distinguish_sweep(spec("sweep", instance="gen:hard:1024", trials=100), workers=1)
        acc = [r["accuracy"] for r in rows]
        assert len(rows) == 7
        assert all(b >= a - 0.1 for a, b in zip(acc, acc[1:]))
        assert all(0 <= r["norm_stage_frac"] <= 1 for r in rows)

    def test_single_trial(self):
        rows = run_distinguish_sweep(spec("sweep", instance="gen:hard:1024", trials=1), workers=1)
        assert len(rows) == 7 and all(r["trials"] == 2 for r in rows)
        jsonschema.validate(json.loads(rows_to_json(rows)), TABLE_SCHEMA)

    def test_identical_pair_is_a_coin(self):
        s = norms(*make_hard_pair(1024)).theorem_s
        rows = run_distinguish_sweep(spec("sweep", instance="gen:same:1024", s=s, trials=100), workers=1)
        assert all(abs(r["accuracy"] - 0.5) <= 0.1 for r in rows)

    def test_explicit_grid(self):
        sp = spec("sweep", instance="gen:hard:1024", trials=1, overrides={"l": "100", "s_values": "50,100"})
        assert [r["s"] for r in run_distinguish_sweep(sp, workers=1)] == [50, 100]


class TestConcentration:
    def test_default_weights(self):
        rows = run_concentration_suite(ExperimentSpec("concentration", instance="gen:uniform:400", s=100,
                                                      trials=100_000))
        w = rows[0]
        assert w["check"] == "weight_concentration" and w["frequency"] <= 1e-3
        bridge = [r for r in rows if r["check"] == "type_bridge"]
        assert [r["s"] for r in bridge] == [9, 12]
        assert all(r["violations"] == 0 and r["configurations"] > 0 for r in bridge)
        assert all(r["lower"] <= r["min_ratio"] and r["max_ratio"] <= r["upper"] for r in bridge)

    def test_zero_weights(self):
        sp = ExperimentSpec("concentration", instance="gen:uniform:400", s=100, trials=1000,
                            overrides={"weights": "zero", "bridge_s": "9"})
        rows = run_concentration_suite(sp)
        assert rows[0]["exceedances"] == 0 and len(rows) == 2

    def test_refuses_dense_instance(self):
        with pytest.raises(PreconditionError):
            run_concentration_suite(ExperimentSpec("concentration", instance="gen:uniform:100", s=100))


class TestLowerboundSuite:
    def test_defaults(self):
        sp = ExperimentSpec("lowerbound", instance="gen:hard:4096", trials=300)
        rows, reports = run_lowerbound_suite(sp)
        p, q = make_hard_pair(4096)
        assert [r["s"] for r in rows] == [24, round(20 * norms(p, q).numsamples)]
        lo, hi = rows
        assert lo["preconditions_ok"] and not hi["preconditions_ok"]
        assert lo["helpful_frac"] <= 0.08 and lo["ratio_le_8_frac"] >= 0.45
        assert lo["error_rate_hits_difference"] >= 0.05 >= hi["error_rate_hits_difference"]
        doc = json.loads(rows_to_json(rows, sp, {"reports": reports}))
        jsonschema.validate(doc, TABLE_SCHEMA)
        for rep in doc["reports"]:
            jsonschema.validate(rep, LOWERBOUND_REPORT_SCHEMA)


class TestEmitters:
    def test_csv_json_agree(self):
        sp = spec("distinguish", instance="gen:hard:1024", trials=3)
        rows, _ = run_spec(sp, workers=1)
        from_csv = parse_csv(rows_to_csv(rows))
        from_json = json.loads(rows_to_json(rows, sp))["rows"]
        assert len(from_csv) == len(from_json) == 3
        for c, j in zip(from_csv, from_json):
            assert list(c) == list(j)
            for k in c:
                v = j[k]
                assert c[k] == ("" if v is None else str(v)), k

    def test_infinite_values(self):
        rows = [{"x": float("inf")}]
        assert rows_to_csv(rows) == "x\ninf\n"
        assert json.loads(rows_to_json(rows))["rows"][0]["x"] == "inf"


def _cli(tmp_path, *args):
    return cli.main(list(args))


class TestCli:
    @pytest.mark.parametrize("sub,extra", [
        ("distinguish", ["--instance", "gen:hard:1024", "--trials", "4", "--override", "l=100"]),
        ("closeness", ["--instance", "gen:hard:1024", "--trials", "2", "--override", "l=100"]),
        ("sweep", ["--instance", "gen:hard:1024", "--trials", "2", "--override", "l=100"]),
        ("concentration", ["--instance", "gen:uniform:400", "--s", "100", "--trials", "2000"]),
        ("lowerbound", ["--instance", "gen:hard:4096", "--trials", "50"]),
        ("norms", ["--instance", "gen:hard:64"]),
    ])
    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_byte_identical(self, tmp_path, sub, extra, fmt):
        outs = []
        for k in range(2):
            out = tmp_path / f"{k}.{fmt}"
            assert cli.main([sub, *extra, "--seed", "11", "--format", fmt, "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] and outs[0]

    def test_generate_roundtrip(self, tmp_path):
        out = tmp_path / "pair.json"
        assert cli.main(["generate", "--instance", "gen:hard:64", "--out", str(out)]) == 0
        assert resolve_instance([str(out)]) == make_hard_pair(64)

    def test_exit_codes(self, tmp_path, capsys):
        assert cli.main(["distinguish", "--instance", str(tmp_path / "missing.json")]) == 3
        assert cli.main(["distinguish", "--instance", "gen:hard:7"]) == 2
        assert cli.main(["distinguish", "--instance", "gen:same:64", "--s", "auto"]) == 2
        assert cli.main(["norms", "--instance", "gen:hard:64", "--out", str(tmp_path / "no/such/dir.csv")]) == 3

    def test_stdout(self, capsys):
        assert cli.main(["norms", "--instance", "gen:hard:64", "--format", "json"]) == 0
        assert json.loads(capsys.readouterr().out)["l1"] == pytest.approx(1.0)

    def test_console_script(self):
        res = subprocess.run([sys.executable, "-m", "disttest.cli", "norms", "--instance", "gen:hard:64"],
                             capture_output=True, text=True)
        assert res.returncode == 0 and res.stdout.startswith("l1,")

    def test_bad_override(self):
        with pytest.raises(SystemExit):
            cli.main(["sweep", "--override", "novalue"])
