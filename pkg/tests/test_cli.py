import os
import shutil

import numpy as np
import pytest
from click.testing import CliRunner

from triplegraph.cli import (
    EXIT_CONFIG,
    EXIT_MISSING,
    EXIT_VERSION,
    ConfigError,
    RunConfig,
    SampleRecord,
    format_samples,
    main,
    parse_run_config,
    parse_samples,
)

SMALL = """\
images = 30
steps = 2
batch_size = 4
n_critic = 1
hidden = 8
critic_hidden = 8
embed_dim = 4
attention_hidden = 4
eval_every = 1
eval_images = 2
eval_samples = 10
samples_per_image = 30
baseline_trials = 3
sample_count = 20
"""


def run(args, ok=True):
    res = CliRunner().invoke(main, args, catch_exceptions=False)
    if ok:
        assert res.exit_code == 0, res.output
    return res


@pytest.fixture()
def cfg_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(SMALL)
    return str(p)


def figure_fixture(path):
    dog = [0.5, 0.5, 0.0, 0.0]
    mid = [0.25] * 4
    recs = [
        SampleRecord(1.0, ("dog", "on", "skateboard"), np.array([dog, mid, [0, 0, 1.0, 0]])),
        SampleRecord(0.5, ("dog", "is", "brown"), np.array([dog, mid, [0, 0, 0, 1.0]])),
    ]
    with open(path, "w") as fh:
        fh.write(format_samples(recs))


def test_config_parsing():
    cfg = parse_run_config("# comment\nsteps = 7  # inline\nlr = 0.5\n")
    assert cfg.steps == 7 and cfg.lr == 0.5 and cfg.batch_size == RunConfig().batch_size
    with pytest.raises(ConfigError):
        parse_run_config("nonsense = 1\n")
    with pytest.raises(ConfigError):
        parse_run_config("steps = many\n")
    with pytest.raises(ConfigError):
        parse_run_config("just words\n")


def test_samples_round_trip():
    recs = [SampleRecord(-0.25, ("a", "b", "c"), np.array([[0.5, 0.5], [1.0, 0.0], [0.0, 1.0]]))]
    back = parse_samples(format_samples(recs))
    assert back[0].score == -0.25 and back[0].triple == ("a", "b", "c")
    np.testing.assert_array_equal(back[0].attention, recs[0].attention)
    with pytest.raises(ValueError):
        parse_samples("1.0\ta\tb\n")


def test_figure_fixture_graph(tmp_path):
    samples = tmp_path / "fig.tsv"
    figure_fixture(samples)
    out = tmp_path / "g"
    res = run(["build-graph", "--samples", str(samples), "--out-dir", str(out)])
    assert "nodes 3 edges 2" in res.output
    dot = (out / "graph.dot").read_text()
    assert dot.count("[label=") == 5 and dot.count("->") == 2
    summary = (out / "graph.tsv").read_text().splitlines()
    assert sum(line.startswith("node") for line in summary) == 3


def test_help_lists_flags_with_defaults():
    for cmd in ("gen-data", "train", "sample", "build-graph", "eval", "inspect"):
        text = run([cmd, "--help"]).output
        for flag in ("--config", "--seed", "--out-dir"):
            assert flag in text
        assert "default" in text


def test_error_exit_codes(tmp_path, cfg_file):
    res = run(["build-graph", "--samples", str(tmp_path / "absent.tsv")], ok=False)
    assert res.exit_code == EXIT_MISSING
    assert res.output.strip().startswith("error\tmissing-file\t")
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown_key = 3\n")
    res = run(["gen-data", "--config", str(bad), "--out-dir", str(tmp_path / "c")], ok=False)
    assert res.exit_code == EXIT_CONFIG
    assert len(res.output.strip().splitlines()) == 1
    ck = tmp_path / "ck.bin"
    ck.write_bytes(b"TGCKPT\x00\x00" + (99).to_bytes(4, "little"))
    res = run(["inspect", "--checkpoint", str(ck)], ok=False)
    assert res.exit_code == EXIT_VERSION


def pipeline(root, cfg_file):
    corpus, work = os.path.join(root, "corpus"), os.path.join(root, "work")
    base = ["--config", cfg_file, "--seed", "5"]
    run(["gen-data", *base, "--out-dir", corpus])
    run(["train", *base, "--corpus", corpus, "--out-dir", work])
    ck = os.path.join(work, "checkpoint.bin")
    run(["sample", *base, "--checkpoint", ck, "--corpus", corpus, "--image-id", "000001", "--out-dir", work])
    run(["build-graph", *base, "--samples", os.path.join(work, "samples-000001.tsv"), "--out-dir", work])
    run(["eval", *base, "--checkpoint", ck, "--corpus", corpus, "--k", "5", "--k", "50", "--out-dir", work])
    text = run(["inspect", "--checkpoint", ck]).output
    assert "step = 2" in text
    outputs = {}
    for d in (corpus, work):
        for dirpath, _, files in os.walk(d):
            for f in files:
                p = os.path.join(dirpath, f)
                outputs[os.path.relpath(p, root)] = open(p, "rb").read()
    return outputs


def test_pipeline_is_byte_identical(tmp_path, cfg_file):
    root = str(tmp_path / "run")
    a = pipeline(root, cfg_file)
    shutil.rmtree(root)
    b = pipeline(root, cfg_file)
    assert a == b
    report = a[os.path.join("work", "report.tsv")].decode().splitlines()
    assert sum(r.startswith("MEAN") for r in report) == 2
    # 30 images split 70/15/15 leave 5 test images, one row per k each
    assert len(report) == 5 * 2 + 2


def test_commands_are_idempotent(tmp_path, cfg_file):
    out = tmp_path / "c"
    run(["gen-data", "--config", cfg_file, "--out-dir", str(out)])
    first = (out / "manifest").read_bytes(), (out / "features.bin").read_bytes()
    run(["gen-data", "--config", cfg_file, "--out-dir", str(out)])
    assert first == ((out / "manifest").read_bytes(), (out / "features.bin").read_bytes())


def test_vocabulary_mismatch_is_rejected(tmp_path, cfg_file):
    a, b = tmp_path / "a", tmp_path / "b"
    run(["gen-data", "--config", cfg_file, "--out-dir", str(a)])
    run(["train", "--config", cfg_file, "--corpus", str(a), "--out-dir", str(tmp_path / "w")])
    run(["gen-data", "--config", cfg_file, "--out-dir", str(b)])
    (b / "vocab.tsv").write_text("square\tobject\nleft-of\trelation\n")
    res = run(["eval", "--config", cfg_file, "--checkpoint", str(tmp_path / "w" / "checkpoint.bin"),
               "--corpus", str(b), "--out-dir", str(tmp_path / "e")], ok=False)
    assert res.exit_code == EXIT_VERSION


def test_resume_matches_uninterrupted(tmp_path, cfg_file):
    corpus = str(tmp_path / "c")
    run(["gen-data", "--config", cfg_file, "--out-dir", corpus])
    run(["train", "--config", cfg_file, "--corpus", corpus, "--steps", "2", "--out-dir", str(tmp_path / "full")])
    run(["train", "--config", cfg_file, "--corpus", corpus, "--steps", "1", "--out-dir", str(tmp_path / "part")])
    run(["train", "--config", cfg_file, "--corpus", corpus, "--steps", "2", "--resume", "--out-dir", str(tmp_path / "part")])
    full = (tmp_path / "full" / "checkpoint.bin").read_bytes()
    assert (tmp_path / "part" / "checkpoint.bin").read_bytes() == full
    assert (tmp_path / "part" / "metrics.tsv").read_text() == (tmp_path / "full" / "metrics.tsv").read_text()
