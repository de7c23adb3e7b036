import json
import os

import pytest

from convmem.cli import EXIT_CORRUPT, EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from convmem.corpus import SyntheticSpec, make_synthetic
from convmem.ingest import write_annotated


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "corpus.jsonl"
    write_annotated(path, make_synthetic(SyntheticSpec(n_dialogues=3, seed=19)))
    return str(path)


@pytest.fixture(scope="module")
def store_dir(tmp_path_factory, corpus_file):
    store = str(tmp_path_factory.mktemp("data") / "store")
    assert main(["ingest", corpus_file, "--store", store, "--dim", "256"]) == EXIT_OK
    return store


class TestIngest:
    def test_counts_reported(self, corpus_file, tmp_path, capsys):
        store = str(tmp_path / "store")
        assert main(["ingest", corpus_file, "--store", store, "--dim", "256"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "indexed" in out and "query turns" in out
        assert os.path.exists(os.path.join(store, "manifest.json"))

    def test_reingest_fails_store_unchanged(self, corpus_file, store_dir, capsys):
        before = open(os.path.join(store_dir, "manifest.json"), "rb").read()
        assert main(["ingest", corpus_file, "--store", store_dir]) == EXIT_DATA
        err = capsys.readouterr().err
        assert "duplicate" in err.lower()
        after = open(os.path.join(store_dir, "manifest.json"), "rb").read()
        assert before == after

    def test_schema_violation_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(json.dumps({
            "dialogue_id": "d", "session_id": 1, "turn_id": 1, "speaker": "u",
            "timestamp": "t", "text": "x", "entities": [], "dep_triples": [],
            "discourse": [], "embedding": [0.0] * 16,
        }) + "\n")
        assert main(["ingest", str(bad), "--store", str(tmp_path / "s"),
                     "--dim", "16"]) == EXIT_DATA
        assert "line 1" in capsys.readouterr().err


class TestQuery:
    def test_toy_text_query(self, store_dir, capsys):
        assert main(["query", "--store", store_dir, "--text",
                     "Did he confirm the booking time?", "--k", "3"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "toy-mode" in out
        assert "score=" in out

    def test_gold_query_with_serialization(self, store_dir, corpus_file, capsys):
        assert main(["query", "--store", store_dir, "--queries", corpus_file,
                     "--query-index", "0", "--serialize", "--k", "2"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "[UTTERANCE @" in out

    def test_exact_weights_flags(self, store_dir, capsys):
        assert main(["query", "--store", store_dir, "--text", "noon workshop",
                     "--weights", "1,0,0", "--exact", "--k", "2"]) == EXIT_OK

    def test_bad_weights_rejected(self, store_dir, capsys):
        assert main(["query", "--store", store_dir, "--text", "x",
                     "--weights", "0.5,0.5,0.5"]) == EXIT_DATA

    def test_missing_store_is_data_error(self, tmp_path, capsys):
        assert main(["query", "--store", str(tmp_path / "nope"),
                     "--text", "x"]) == EXIT_DATA


class TestEvalAndTune:
    def test_eval_reports_metrics(self, store_dir, capsys):
        assert main(["eval", "--store", store_dir, "--exact"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith("FR=")

    def test_eval_ablation_table(self, store_dir, capsys):
        assert main(["eval", "--store", store_dir, "--ablation",
                     "--exact"]) == EXIT_OK
        out = capsys.readouterr().out
        for variant in ("full", "no-discourse", "no-coref", "no-dep", "dense-only"):
            assert variant in out

    def test_tune_prints_grid_and_best(self, store_dir, capsys, tmp_path):
        out_file = str(tmp_path / "grid.json")
        assert main(["tune", "--store", store_dir, "--grid-step", "0.1",
                     "--exact", "--out", out_file]) == EXIT_OK
        out = capsys.readouterr().out
        assert "lambda_s" in out and "best:" in out
        data = json.loads(open(out_file).read())
        assert "best" in data and "grid" in data


class TestSessionizeSynthBench:
    def test_synth_then_sessionize_audit(self, tmp_path, capsys):
        corpus = str(tmp_path / "c.jsonl")
        assert main(["synth", "--out", corpus, "--dialogues", "2",
                     "--seed", "3"]) == EXIT_OK
        assert main(["sessionize", corpus, "--out", str(tmp_path / "s.jsonl"),
                     "--audit", "--audit-fraction", "1.0"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "pass fraction" in out

    def test_long_range_mode(self, tmp_path, capsys):
        corpus = str(tmp_path / "c.jsonl")
        main(["synth", "--out", corpus, "--dialogues", "1", "--seed", "4"])
        assert main(["sessionize", corpus, "--out", str(tmp_path / "lr.jsonl"),
                     "--long-range"]) == EXIT_OK

    def test_bench_reports_stages(self, store_dir, capsys):
        assert main(["bench", "--store", store_dir, "--n", "20",
                     "--warmup", "2"]) == EXIT_OK
        out = capsys.readouterr().out
        for stage in ("dense", "symbolic", "fusion", "total"):
            assert stage in out

    def test_inspect(self, store_dir, capsys):
        assert main(["inspect", "--store", store_dir]) == EXIT_OK
        out = capsys.readouterr().out
        assert "posting_keys" in out and "format_version" in out


class TestExitCodes:
    def test_usage_error_is_one(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["query"])  # missing required --store
        assert exc.value.code == EXIT_USAGE

    def test_unknown_command_is_usage(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == EXIT_USAGE

    def test_corruption_is_three(self, store_dir, tmp_path, capsys):
        import shutil
        broken = str(tmp_path / "broken")
        shutil.copytree(store_dir, broken)
        seg = os.path.join(broken, "dense.seg")
        blob = bytearray(open(seg, "rb").read())
        blob[50] ^= 0xFF
        open(seg, "wb").write(bytes(blob))
        assert main(["inspect", "--store", broken]) == EXIT_CORRUPT
        assert "corruption" in capsys.readouterr().err


class TestDeterminism:
    def test_synth_same_seed_same_bytes(self, tmp_path):
        a, b = str(tmp_path / "a.jsonl"), str(tmp_path / "b.jsonl")
        main(["synth", "--out", a, "--dialogues", "2", "--seed", "11"])
        main(["synth", "--out", b, "--dialogues", "2", "--seed", "11"])
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_query_output_stable(self, store_dir, capsys):
        argv = ["query", "--store", store_dir, "--text", "noon workshop", "--k", "3"]
        main(argv)
        first = capsys.readouterr().out
        main(argv)
        assert capsys.readouterr().out == first
