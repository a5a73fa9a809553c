"""End-to-end CLI runs: every subcommand, exit codes, and manifests."""

import json
import os
import shutil
import subprocess

import numpy as np
import pytest

from taiyan.cli import main


def _json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _lines(path):
    with open(path, encoding="utf-8") as f:
        return f.read().splitlines()


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """A workspace with a corpus, a vocabulary, and a tiny pretrained model."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    corpus.mkdir()
    body = [
        "天地玄黃，宇宙洪荒。日月盈昃，辰宿列張。",
        "寒來暑往，秋收冬藏。閏餘成歲，律呂調陽。",
        "雲騰致雨，露結為霜。金生麗水，玉出崑岡。",
        "給上述文本添加標點。識別文中的典故。",
        "將上文翻譯成白話文。本中的「道」是什麼意思？",
        "道可道，非常道。名可名，非常名。",
    ]
    for i, text in enumerate(body):
        (corpus / f"doc{i}.txt").write_text(text + "\n", encoding="utf-8")

    vocab_path = root / "vocab.txt"
    assert main(["vocab", "--corpus", str(corpus), "--out", str(vocab_path)]) == 0

    config = root / "pretrain.json"
    config.write_text(json.dumps({
        "model": {"n_layers": 1, "d_model": 8, "n_heads": 2, "max_seq_len": 64},
        "train": {"total_steps": 4, "batch_size": 2, "seq_len": 16,
                  "warmup_steps": 1, "repeat_factor": 2},
    }), encoding="utf-8")
    ckpt = root / "model.tyck"
    assert main([
        "train", "--config", str(config), "--vocab", str(vocab_path),
        "--mode", "pretrain", "--corpus", str(corpus),
        "--out", str(ckpt), "--seed", "0",
    ]) == 0
    return {"root": root, "corpus": corpus, "vocab": vocab_path,
            "config": config, "ckpt": ckpt}


# ---------------------------------------------------------------------------
# vocab and train
# ---------------------------------------------------------------------------

def test_vocab_output_and_manifest(ws):
    from taiyan.vocab import load_vocab

    vocab = load_vocab(str(ws["vocab"]))
    assert vocab.size > 20
    manifest = _json(str(ws["vocab"]) + ".manifest.json")
    assert manifest["command"] == "vocab"
    assert manifest["inputs"] == [str(ws["corpus"])]
    assert manifest["outputs"] == [str(ws["vocab"])]
    assert manifest["checkpoint_sha256"] is None


def test_train_artifacts(ws):
    from taiyan.checkpoint import checkpoint_sha256, load_checkpoint

    params, cfg = load_checkpoint(str(ws["ckpt"]))
    assert cfg.n_layers == 1 and cfg.d_model == 8
    loss = _lines(str(ws["ckpt"]) + ".loss.csv")
    assert loss[0] == "step,lr,loss"
    assert len(loss) == 1 + 4
    manifest = _json(str(ws["ckpt"]) + ".manifest.json")
    assert manifest["command"] == "train"
    assert manifest["seed"] == 0
    assert manifest["config"]["mode"] == "pretrain"
    assert manifest["config"]["model"]["d_model"] == 8
    assert manifest["config"]["train"]["warmup_steps"] == 1
    assert manifest["checkpoint_sha256"] == checkpoint_sha256(str(ws["ckpt"]))


def test_train_sft_with_rejects(ws, tmp_path):
    data = tmp_path / "tasks.jsonl"
    records = [
        json.dumps({"task": "punctuation", "input": "天地玄黃",
                    "output": "天地玄黃。"}, ensure_ascii=False),
        "not json at all",
        json.dumps({"task": "translation", "input": "雲騰致雨",
                    "output": "雲騰致雨也"}, ensure_ascii=False),
    ]
    data.write_text("\n".join(records) + "\n", encoding="utf-8")
    config = tmp_path / "sft.json"
    config.write_text(json.dumps({
        "train": {"total_steps": 2, "batch_size": 2, "seq_len": 40, "warmup_steps": 1},
    }), encoding="utf-8")
    out = tmp_path / "sft.tyck"
    rc = main([
        "train", "--config", str(config), "--vocab", str(ws["vocab"]),
        "--mode", "sft", "--data", str(data), "--init", str(ws["ckpt"]),
        "--out", str(out),
    ])
    assert rc == 0
    rejects = _lines(str(out) + ".rejects.csv")
    assert rejects[0] == "line,reason"
    assert rejects[1].startswith("2,")
    manifest = _json(str(out) + ".manifest.json")
    assert str(out) + ".rejects.csv" in manifest["outputs"]


def test_train_mode_flag_mismatch(ws, tmp_path):
    rc = main([
        "train", "--config", str(ws["config"]), "--vocab", str(ws["vocab"]),
        "--mode", "pretrain", "--data", "whatever.jsonl",
        "--out", str(tmp_path / "x.tyck"),
    ])
    assert rc == 2


def test_train_determinism(ws, tmp_path):
    outs = []
    for name in ("a.tyck", "b.tyck"):
        out = tmp_path / name
        assert main([
            "train", "--config", str(ws["config"]), "--vocab", str(ws["vocab"]),
            "--mode", "pretrain", "--corpus", str(ws["corpus"]),
            "--out", str(out), "--seed", "0", "--threads", "1",
        ]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


# ---------------------------------------------------------------------------
# punctuate and infer
# ---------------------------------------------------------------------------

def test_punctuate_round_trip(ws, tmp_path):
    infile = tmp_path / "in.txt"
    infile.write_text("天地玄黃宇宙洪荒\n道可道，非常道。\n", encoding="utf-8")
    out = tmp_path / "out.txt"
    rc = main([
        "punctuate", "--ckpt", str(ws["ckpt"]), "--vocab", str(ws["vocab"]),
        "--in", str(infile), "--out", str(out),
    ])
    assert rc == 0
    from taiyan.textcore import strip_marks

    results = _lines(str(out))
    assert len(results) == 2
    assert strip_marks(results[0]) == "天地玄黃宇宙洪荒"
    assert strip_marks(results[1]) == "道可道非常道"  # input marks are stripped first


def test_punctuate_flags_csv(ws, tmp_path):
    infile = tmp_path / "in.txt"
    infile.write_text("天地玄黃\n", encoding="utf-8")
    gold = tmp_path / "gold.txt"
    gold.write_text("天地，玄黃。\n", encoding="utf-8")
    out = tmp_path / "out.txt"
    rc = main([
        "punctuate", "--ckpt", str(ws["ckpt"]), "--vocab", str(ws["vocab"]),
        "--in", str(infile), "--out", str(out), "--flags", str(gold),
    ])
    assert rc == 0
    flags = _lines(str(out) + ".flags.csv")
    assert flags[0] == "line,boundary,kind,gold_mark,model_mark,before,after"


def test_punctuate_rejects_empty_line(ws, tmp_path):
    infile = tmp_path / "in.txt"
    infile.write_text("天地\n。\n", encoding="utf-8")
    rc = main([
        "punctuate", "--ckpt", str(ws["ckpt"]), "--vocab", str(ws["vocab"]),
        "--in", str(infile), "--out", str(tmp_path / "out.txt"),
    ])
    assert rc == 2


def test_infer_text_and_out(ws, tmp_path, capsys):
    out = tmp_path / "answer.txt"
    rc = main([
        "infer", "--ckpt", str(ws["ckpt"]), "--vocab", str(ws["vocab"]),
        "--task", "punctuation", "--text", "天地玄黃", "--out", str(out),
    ])
    assert rc == 0
    from taiyan.textcore import strip_marks

    answer = out.read_text(encoding="utf-8").rstrip("\n")
    assert strip_marks(answer) == "天地玄黃"
    assert answer in capsys.readouterr().out
    manifest = _json(str(out) + ".manifest.json")
    assert manifest["command"] == "infer"
    assert manifest["config"]["task"] == "punctuation"


def test_infer_requires_one_source(ws, tmp_path):
    base = ["infer", "--ckpt", str(ws["ckpt"]), "--vocab", str(ws["vocab"]),
            "--task", "translation"]
    assert main(base) == 2
    infile = tmp_path / "t.txt"
    infile.write_text("天地", encoding="utf-8")
    assert main(base + ["--text", "天地", "--in", str(infile)]) == 2
    assert main(base + ["--in", str(infile), "--max-new", "4"]) == 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

@pytest.fixture()
def eval_files(tmp_path):
    gold = tmp_path / "gold.txt"
    pred = tmp_path / "pred.txt"
    gold.write_text("天地玄黃，宇宙洪荒。\n日月盈昃。\n", encoding="utf-8")
    pred.write_text("天地玄黃。宇宙洪荒。\n日月盈昃。\n", encoding="utf-8")
    ag = tmp_path / "allusion_gold.jsonl"
    ap = tmp_path / "allusion_pred.jsonl"
    ag.write_text(
        json.dumps({"text": "甲", "has_allusion": True, "allusion_ids": ["A1"]}) + "\n"
        + json.dumps({"text": "乙", "has_allusion": False}) + "\n",
        encoding="utf-8",
    )
    ap.write_text(
        json.dumps({"has_allusion": True, "allusion_ids": ["A1"]}) + "\n"
        + json.dumps({"has_allusion": False}) + "\n",
        encoding="utf-8",
    )
    refs = tmp_path / "refs.txt"
    hyps = tmp_path / "hyps.txt"
    refs.write_text("天地玄黃宇宙洪荒\n", encoding="utf-8")
    hyps.write_text("天地玄黃宇宙洪荒\n", encoding="utf-8")
    return {"gold": gold, "pred": pred, "ag": ag, "ap": ap,
            "refs": refs, "hyps": hyps, "dir": tmp_path}


def test_eval_seg_punct(eval_files):
    out = eval_files["dir"] / "report"
    rc = main(["eval", "seg-punct", "--gold", str(eval_files["gold"]),
               "--pred", str(eval_files["pred"]), "--out", str(out)])
    assert rc == 0
    rows = _lines(str(out) + ".csv")
    header = rows[0].split(",")
    values = dict(zip(header, rows[1].split(",")))
    assert header[0] == "text_error_rate"
    assert float(values["text_error_rate"]) == 0.0
    assert float(values["seg_f1"]) == 1.0
    assert float(values["punct_f1"]) == pytest.approx(2 / 3)
    assert values["bleu"] == ""  # not part of this evaluation


def test_eval_seg_punct_line_mismatch(eval_files):
    short = eval_files["dir"] / "short.txt"
    short.write_text("天地玄黃，宇宙洪荒。\n", encoding="utf-8")
    rc = main(["eval", "seg-punct", "--gold", str(eval_files["gold"]),
               "--pred", str(short), "--out", str(eval_files["dir"] / "x")])
    assert rc == 2


def test_eval_allusion(eval_files):
    out = eval_files["dir"] / "allu"
    rc = main(["eval", "allusion", "--gold", str(eval_files["ag"]),
               "--pred", str(eval_files["ap"]), "--out", str(out)])
    assert rc == 0
    rows = _lines(str(out) + ".csv")
    values = dict(zip(rows[0].split(","), rows[1].split(",")))
    assert float(values["detection_acc"]) == 1.0
    assert float(values["ident_f1"]) == 1.0


def test_eval_translate(eval_files):
    out = eval_files["dir"] / "tr"
    rc = main(["eval", "translate", "--refs", str(eval_files["refs"]),
               "--hyps", str(eval_files["hyps"]), "--out", str(out)])
    assert rc == 0
    rows = _lines(str(out) + ".csv")
    values = dict(zip(rows[0].split(","), rows[1].split(",")))
    assert float(values["bleu"]) == pytest.approx(100.0)
    assert float(values["chrf"]) == pytest.approx(100.0)


def test_eval_suite(eval_files):
    config = eval_files["dir"] / "suite.json"
    config.write_text(json.dumps({
        "seg_punct": {"gold": str(eval_files["gold"]), "pred": str(eval_files["pred"])},
        "allusion": {"gold": str(eval_files["ag"]), "pred": str(eval_files["ap"])},
        "translate": {"refs": str(eval_files["refs"]), "hyps": str(eval_files["hyps"])},
    }), encoding="utf-8")
    out = eval_files["dir"] / "suite_out"
    rc = main(["eval", "suite", "--config", str(config), "--out", str(out)])
    assert rc == 0
    for name in ("seg_punct", "allusion", "translate", "summary"):
        assert (out / f"{name}.csv").exists()
        assert (out / f"{name}.txt").exists()
    rows = _lines(str(out / "summary.csv"))
    values = dict(zip(rows[0].split(","), rows[1].split(",")))
    assert float(values["seg_f1"]) == 1.0
    assert float(values["bleu"]) == pytest.approx(100.0)
    manifest = _json(str(out / "manifest.json"))
    assert manifest["command"] == "eval suite"


def test_eval_suite_fails_before_writing(eval_files):
    config = eval_files["dir"] / "bad_suite.json"
    config.write_text(json.dumps({
        "seg_punct": {"gold": str(eval_files["gold"]),
                      "pred": str(eval_files["dir"] / "nope.txt")},
    }), encoding="utf-8")
    out = eval_files["dir"] / "no_partial"
    rc = main(["eval", "suite", "--config", str(config), "--out", str(out)])
    assert rc == 3  # missing prediction file surfaces as an IO error
    assert not out.exists()


# ---------------------------------------------------------------------------
# human-eval
# ---------------------------------------------------------------------------

def test_human_eval_bundle_and_key(tmp_path):
    answers = tmp_path / "answers.jsonl"
    answers.write_text(
        json.dumps({"item": "i1", "answers": {"A": "甲答", "B": "乙答"}},
                   ensure_ascii=False) + "\n"
        + json.dumps({"item": "i2", "answers": {"A": "丙答", "B": "丁答"}},
                     ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    out1, out2 = tmp_path / "b1", tmp_path / "b2"
    for out in (out1, out2):
        rc = main(["human-eval", "bundle", "--answers", str(answers),
                   "--out-dir", str(out), "--seed", "7"])
        assert rc == 0
    assert (out1 / "bundles.txt").read_bytes() == (out2 / "bundles.txt").read_bytes()
    key = _json(str(out1 / "key.json"))
    assert set(key) == {"i1", "i2"}
    assert sorted(key["i1"].values()) == ["A", "B"]
    bundles_text = (out1 / "bundles.txt").read_text(encoding="utf-8")
    assert "item i1" in bundles_text and "[0]" in bundles_text
    assert "A" not in bundles_text.replace("甲答", "")  # provenance withheld


def test_human_eval_aggregate(tmp_path):
    ratings = tmp_path / "ratings.csv"
    ratings.write_text(
        "item,system,evaluator,score\n"
        "i1,A,e1,5\ni1,B,e1,3\ni2,A,e1,4\ni2,B,e1,4\n"
        "i1,A,e2,4\ni1,B,e2,2\ni2,A,e2,5\ni2,B,e2,3\n",
        encoding="utf-8",
    )
    out = tmp_path / "agg"
    rc = main(["human-eval", "aggregate", "--ratings", str(ratings),
               "--out", str(out), "--scale", "translation"])
    assert rc == 0
    rows = _lines(str(out) + ".csv")
    assert rows[0] == "system,mean_score,win_rate"
    by_system = {r.split(",")[0]: r.split(",") for r in rows[1:]}
    assert float(by_system["A"][1]) == pytest.approx(4.5)
    assert float(by_system["B"][1]) == pytest.approx(3.0)
    assert float(by_system["A"][2]) == 1.0
    report = open(str(out) + ".txt", encoding="utf-8").read()
    assert "inter-rater consistency" in report


def test_human_eval_aggregate_scale_violation(tmp_path):
    ratings = tmp_path / "ratings.csv"
    ratings.write_text("item,system,evaluator,score\ni1,A,e1,0.7\n", encoding="utf-8")
    rc = main(["human-eval", "aggregate", "--ratings", str(ratings),
               "--out", str(tmp_path / "agg"), "--scale", "word"])
    assert rc == 2


# ---------------------------------------------------------------------------
# sense-drift
# ---------------------------------------------------------------------------

@pytest.fixture()
def drift_corpus(tmp_path):
    for period, docs in {
        "Pre-Qin": ["道可道非常道"],          # three non-overlapping hits
        "Tang": ["大道如青天"],
    }.items():
        pdir = tmp_path / "periods" / period
        pdir.mkdir(parents=True)
        for i, doc in enumerate(docs):
            (pdir / f"{i}.txt").write_text(doc, encoding="utf-8")
    return tmp_path / "periods"


def test_sense_drift_with_gloss_file(drift_corpus, tmp_path):
    glosses = tmp_path / "glosses.txt"
    glosses.write_text("道路也\n道路也\n道理也\n道路也矣\n", encoding="utf-8")
    out = tmp_path / "drift"
    rc = main(["sense-drift", "--corpus", str(drift_corpus), "--keyword", "道",
               "--glosses", str(glosses), "--out", str(out)])
    assert rc == 0
    rows = _lines(str(out) + ".csv")
    assert rows[0] == "period,cluster_representative,frequency"
    assert (tmp_path / "drift.svg").exists()
    manifest = _json(str(out) + ".manifest.json")
    assert manifest["config"]["keyword"] == "道"
    assert manifest["config"]["theta"] == 0.85
    # determinism
    out2 = tmp_path / "drift2"
    assert main(["sense-drift", "--corpus", str(drift_corpus), "--keyword", "道",
                 "--glosses", str(glosses), "--out", str(out2)]) == 0
    assert (tmp_path / "drift.csv").read_bytes() == (tmp_path / "drift2.csv").read_bytes()
    assert (tmp_path / "drift.svg").read_bytes() == (tmp_path / "drift2.svg").read_bytes()


def test_sense_drift_gloss_count_mismatch(drift_corpus, tmp_path):
    glosses = tmp_path / "glosses.txt"
    glosses.write_text("道路也\n", encoding="utf-8")
    rc = main(["sense-drift", "--corpus", str(drift_corpus), "--keyword", "道",
               "--glosses", str(glosses), "--out", str(tmp_path / "x")])
    assert rc == 2


def test_sense_drift_keyword_absent(drift_corpus, tmp_path):
    glosses = tmp_path / "glosses.txt"
    glosses.write_text("x\n", encoding="utf-8")
    rc = main(["sense-drift", "--corpus", str(drift_corpus), "--keyword", "龍",
               "--glosses", str(glosses), "--out", str(tmp_path / "x")])
    assert rc == 2


def test_sense_drift_model_glossing(ws, drift_corpus, tmp_path):
    out = tmp_path / "modeled"
    rc = main(["sense-drift", "--corpus", str(drift_corpus), "--keyword", "道",
               "--ckpt", str(ws["ckpt"]), "--vocab", str(ws["vocab"]),
               "--out", str(out)])
    # glosses may legitimately come out empty from a barely-trained model
    assert rc in (0, 2)


def test_sense_drift_requires_one_gloss_source(drift_corpus, tmp_path):
    rc = main(["sense-drift", "--corpus", str(drift_corpus), "--keyword", "道",
               "--out", str(tmp_path / "x")])
    assert rc == 2


# ---------------------------------------------------------------------------
# exit codes, threads, version
# ---------------------------------------------------------------------------

def test_exit_code_io_error(tmp_path):
    rc = main(["vocab", "--corpus", str(tmp_path / "missing"),
               "--out", str(tmp_path / "v.txt")])
    assert rc == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_exit_code_numeric_error(ws, tmp_path):
    """Training from a finite-but-degenerate checkpoint must exit 4."""
    from taiyan.checkpoint import load_checkpoint, save_checkpoint

    params, cfg = load_checkpoint(str(ws["ckpt"]))
    hot = {k: np.full_like(v, 1e30) for k, v in params.items()}
    bad_ckpt = tmp_path / "hot.tyck"
    save_checkpoint(str(bad_ckpt), hot, cfg)
    config = tmp_path / "resume.json"
    config.write_text(json.dumps({
        "train": {"total_steps": 2, "batch_size": 2, "seq_len": 16, "warmup_steps": 1},
    }), encoding="utf-8")
    rc = main([
        "train", "--config", str(config), "--vocab", str(ws["vocab"]),
        "--mode", "pretrain", "--corpus", str(ws["corpus"]),
        "--init", str(bad_ckpt), "--out", str(tmp_path / "out.tyck"),
    ])
    assert rc == 4


def test_threads_flag_sets_env(ws, tmp_path, monkeypatch):
    monkeypatch.delenv("TAIYAN_THREADS", raising=False)
    rc = main(["vocab", "--corpus", str(ws["corpus"]),
               "--out", str(tmp_path / "v.txt"), "--threads", "2"])
    assert rc == 0
    assert os.environ["OPENBLAS_NUM_THREADS"] == "2"
    # restore the single-thread default for later numeric tests
    main(["vocab", "--corpus", str(ws["corpus"]), "--out", str(tmp_path / "v2.txt")])
    assert os.environ["OPENBLAS_NUM_THREADS"] == "1"
    monkeypatch.setenv("TAIYAN_THREADS", "zero")
    rc = main(["vocab", "--corpus", str(ws["corpus"]), "--out", str(tmp_path / "v3.txt")])
    assert rc == 2


def test_console_script_version():
    exe = shutil.which("taiyan")
    assert exe, "console script not installed"
    proc = subprocess.run([exe, "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "taiyan 0.1.0"
