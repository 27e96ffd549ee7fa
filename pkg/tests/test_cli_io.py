import csv
import io
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainlab import SpecError
from chainlab.cli_io import (
    ChainSpec,
    analyze,
    csv_to_numbers,
    json_numbers,
    loads_spec,
    main,
    parse_spec,
    report_exit_code,
    report_to_csv,
)
from chainlab.generators import greasy_ladder, random_reversible


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


class TestSpecs:
    def test_family_shorthand(self):
        spec = parse_spec("greasy_ladder:n=6")
        assert spec.family == "greasy_ladder" and spec.params == {"n": 6}
        assert spec.build().n == 6

    def test_alias(self):
        spec = parse_spec("flip2")
        assert spec.build().P.tolist() == [[0.0, 1.0], [1.0, 0.0]]

    def test_matrix_keeps_decimal_strings(self):
        spec = loads_spec('{"matrix": [["0.5", "0.5"], ["0.25", "0.75"]]}')
        assert spec.matrix[1] == ["0.25", "0.75"]
        assert spec.build().pi[0] == pytest.approx(1 / 3)

    def test_tree(self):
        spec = loads_spec('{"tree": {"edges": [[0, 1, "1.0"], [1, 2, "2.0"]]}}')
        assert spec.is_tree
        assert spec.build().P[1, 2] == pytest.approx(2 / 3)

    def test_file(self, tmp_path):
        f = tmp_path / "c.json"
        f.write_text('{"family": "path_walk", "params": {"n": 4}, "transform": "lazy"}')
        assert parse_spec(str(f)).build().P[0, 0] == 0.5

    def test_loop_transform(self):
        spec = ChainSpec.from_dict({"family": "path_walk", "params": {"n": 3},
                                    "transform": {"loop_perturbed": 0.25}})
        assert spec.build().P[1, 1] == pytest.approx(0.25)

    @pytest.mark.parametrize("bad", [
        "{not json",
        '{"family": "torus", "params": {}}',
        '{"matrix": [["0.5", "0.4"], ["0.5", "0.5"]]}',
        '{"matrix": [["a", "b"]]}',
        '{"family": "path_walk", "matrix": []}',
        '{"family": "path_walk", "params": {"n": 3}, "transform": "twice"}',
        '{"tree": {"edges": [[0, 1], [1, 2], [2, 0]]}}',
    ])
    def test_malformed(self, bad):
        with pytest.raises(SpecError):
            loads_spec(bad).build()

    def test_round_trip_examples(self):
        docs = [
            {"family": "greasy_ladder", "params": {"n": 6}, "transform": "base"},
            {"matrix": [["0.5", "0.5"], ["0.5", "0.5"]], "transform": "lazy"},
            {"tree": {"edges": [[0, 1, "1.0"], [1, 2, "1.0"]]}, "transform": {"loop_perturbed": 0.3}},
        ]
        for doc in docs:
            spec = ChainSpec.from_dict(doc)
            assert loads_spec(spec.dumps()) == spec
            assert spec.to_dict() == doc

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 7), st.integers(0, 1000))
    def test_round_trip_random_matrices(self, n, seed):
        chain = random_reversible(n, seed)
        spec = ChainSpec.from_chain(chain)
        again = loads_spec(spec.dumps())
        assert again == spec
        assert (again.build().P == chain.P).all()


class TestAnalyze:
    def test_greasy_ladder(self):
        code, text = run("analyze", "greasy_ladder:n=6")
        assert code == 0
        rep = json.loads(text)
        p = rep["parameters"]
        # exact value (n - 2 + 2^(1-n)) / (1 - 2^-n), see the decisions ledger
        assert p["t_stop"] == pytest.approx((4 + 2 ** -5) / (1 - 2 ** -6), abs=1e-9)
        assert p["reversible"] is False
        assert rep["provenance"]["epsilon"] == 0.25
        assert rep["provenance"]["separation_threshold"] == 0.75

    def test_flip_chain(self):
        code, text = run("analyze", "flip2")
        assert code == 0
        rep = json.loads(text)
        assert rep["flags"]["t_mix_attained"] is False
        assert rep["parameters"]["t_ave"] == 0
        assert rep["parameters"]["t_L"] == 1

    def test_tree_report(self):
        code, text = run("analyze", '{"tree": {"edges": [[0, 1, "1.0"], [1, 2, "1.0"]]}}')
        rep = json.loads(text)
        assert code == 0
        assert rep["parameters"]["central_node"] == 1
        assert rep["parameters"]["t_v"] == pytest.approx(1.0)

    def test_malformed_spec_exit_1(self, capsys):
        code, _ = run("analyze", '{"matrix": [["0.5", "0.4"], ["0.5", "0.5"]]}')
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_usage_error_exit_1(self):
        with pytest.raises(SystemExit) as exc:
            main(["analyze"])
        assert exc.value.code == 1

    def test_unconverged_exit_3(self):
        code, text = run("analyze", "path_walk:n=8", "--horizon", "2")
        assert code == 3
        assert "t_L" in json.loads(text)["flags"]["unconverged"]

    def test_violation_exit_2(self):
        assert report_exit_code({"inequalities": [{"status": "fail"}], "flags": {"unconverged": ["t_L"]}}) == 2
        assert report_exit_code({"inequalities": [{"status": "pass"}], "flags": {"unconverged": []}}) == 0

    def test_csv_matches_json(self):
        rep = analyze(parse_spec("glued_cliques:n=3"))
        from_json = json_numbers(json.loads(json.dumps(rep)))
        from_csv = csv_to_numbers(report_to_csv(rep))
        assert from_json.keys() == from_csv.keys()
        for k, v in from_json.items():
            assert from_csv[k] == v or (math.isnan(v) and math.isnan(from_csv[k]))

    def test_csv_format_flag(self):
        code, text = run("analyze", "path_walk:n=4", "--format", "csv")
        assert code == 0
        header = next(csv.reader(io.StringIO(text)))
        assert header == ["section", "name", "value", "lhs", "rhs", "slack", "status"]

    def test_reproducible(self):
        assert run("analyze", "biased_cycle:n=5")[1] == run("analyze", "biased_cycle:n=5")[1]


class TestVerify:
    def test_directory_with_flip_chain(self, tmp_path, capsys):
        (tmp_path / "a.json").write_text('{"family": "two_state", "params": {"p": 1, "q": 1}}')
        (tmp_path / "b.json").write_text('{"family": "greasy_ladder", "params": {"n": 4}}')
        (tmp_path / "c.json").write_text('{"tree": {"edges": [[0, 1, "1.0"], [1, 2, "2.0"], [1, 3, "1.5"]]}}')
        code, text = run("verify", str(tmp_path))
        assert code == 0
        rep = json.loads(text)
        assert rep["chains"] == 3 and rep["violations"] == 0
        assert any(r["name"].startswith("max_x E_x[tau_A]") for r in rep["inequalities"])
        assert "b.json: reversible-only checks skipped" in capsys.readouterr().err

    def test_faulty_matrix_rejected(self, tmp_path):
        (tmp_path / "bad.json").write_text('{"matrix": [["0.5", "0.4"], ["0.5", "0.5"]]}')
        code, _ = run("verify", str(tmp_path))
        assert code == 1

    def test_missing_corpus(self, tmp_path):
        assert run("verify", str(tmp_path / "nope"))[0] == 1

    @pytest.mark.slow
    def test_builtin(self):
        code, text = run("verify", "builtin")
        assert code == 0
        assert json.loads(text)["chains"] >= 200


class TestSweep:
    def test_greasy_ladder(self):
        code, text = run("sweep", "greasy_ladder", "--param", "n=2,3,4", "--metric", "tstop")
        assert code == 0
        rows = json.loads(text)["rows"]
        for row in rows:
            n = row["n"]
            assert row["tstop"] == pytest.approx((n - 2 + 2.0 ** (1 - n)) / (1 - 2.0 ** -n), abs=1e-9)

    def test_glued_cliques(self):
        code, text = run("sweep", "glued_cliques", "--param", "n=4,6,8", "--metric", "tH", "--alpha", "0.6")
        assert code == 0
        assert all(r["tH"] <= r["n"] for r in json.loads(text)["rows"])

    def test_fixed_parameter_and_csv(self):
        code, text = run("sweep", "biased_cycle", "--param", "n=4,5", "--set", "p=0.9", "--metric", "tstop,tL",
                         "--format", "csv")
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(text)))
        assert [r["n"] for r in rows] == ["4", "5"]

    def test_unknown_metric(self):
        assert run("sweep", "path_walk", "--param", "n=3", "--metric", "speed")[0] == 1


class TestOtherCommands:
    def test_profile(self):
        code, text = run("profile", "flip2", "--horizon", "3")
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(text)))
        assert list(rows[0]) == ["t", "d", "d_bar", "s", "d_ave", "d_G", "d_Ces"]
        assert float(rows[2]["d_G"]) == pytest.approx(1 / 6)

    def test_transcript(self):
        code, text = run("transcript", "flip2", "--start", "0")
        assert code == 0
        assert text.splitlines()[0] == "t,x,theta,sigma,Sigma"

    def test_transcript_bad_start(self):
        assert run("transcript", "flip2", "--start", "5")[0] == 1


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "chainlab", "analyze", "flip2", "--format", "csv"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert "t_ave" in res.stdout
