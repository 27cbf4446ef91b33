import csv
import json

import pytest

from beansplit import cli
from beansplit.errors import NonFiniteLoss
from beansplit.imagecore import LabelMask, read_image

NET = {"levels": 2, "channels": [6, 6], "enc_convs": 1, "dec_convs": 1}


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    """Synthetic study run through train, calibrate and pipeline config creation."""
    root = tmp_path_factory.mktemp("study")
    assert cli.main(["synth", "--out", str(root), "--size", "32"]) == 0
    (root / "net.json").write_text(json.dumps(NET))
    (root / "train.json").write_text(json.dumps({"epochs": 2, "seed": 3}))
    for model in ("bean", "split"):
        assert cli.main(["train", "--manifest", str(root / "manifest.csv"), "--model", model,
                         "--net-config", str(root / "net.json"),
                         "--train-config", str(root / "train.json"),
                         "--out", str(root / f"{model}.bswt"),
                         "--history", str(root / f"{model}_history.csv")]) == 0
    assert cli.main(["calibrate", "--manifest", str(root / "manifest.csv"),
                     "--weights", str(root / "bean.bswt"), str(root / "split.bswt"),
                     "--exclude-zero", "--out", str(root / "cal.json"),
                     "--curve", str(root / "curve.csv")]) == 0
    cal = json.loads((root / "cal.json").read_text())
    (root / "pipe.json").write_text(json.dumps({
        "bean_weights": "bean.bswt", "split_weights": "split.bswt",
        "split_threshold": cal["threshold"], "max_split_area": 400,
    }))
    return root


def test_train_outputs(study):
    lines = (study / "split_history.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,val_ap" and len(lines) == 3
    assert (study / "split_history.svg").read_text().lstrip().startswith("<?xml")


def test_calibrate_outputs(study):
    cal = json.loads((study / "cal.json").read_text())
    assert 0.0 <= cal["threshold"] <= 1.0 and cal["criterion"] == "iou"
    assert len((study / "curve.csv").read_text().splitlines()) == 102
    assert (study / "curve.svg").exists()


def test_segment(study, tmp_path):
    image = study / "img" / "g0_t10_r1.ppm"
    assert cli.main(["segment", "--config", str(study / "pipe.json"), "--image", str(image),
                     "--out-mask", str(tmp_path / "m.pgm"),
                     "--out-scores", str(tmp_path / "m.scores")]) == 0
    mask = read_image(tmp_path / "m.pgm")
    assert isinstance(mask, LabelMask) and mask.labels.shape == (32, 32)
    meta = json.loads((tmp_path / "m.scores.json").read_text())
    assert meta == {"width": 32, "height": 32, "channels": 3}
    assert (tmp_path / "m.scores").stat().st_size == 32 * 32 * 3 * 4


@pytest.fixture(scope="module")
def measured(study):
    out = study / "measures.csv"
    assert cli.main(["measure", "--config", str(study / "pipe.json"), "--images", str(study / "img"),
                     "--out", str(out), "--json-dir", str(study / "json"),
                     "--plots", str(study / "plots")]) == 0
    return out


def test_measure(measured, study):
    with open(measured, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 20
    assert list(rows[0]) == ["image", "bsr", *[f"bsh_{i}" for i in range(1, 11)],
                             "n_splits", "split_px", "bean_px"]
    for row in rows:
        assert abs(sum(float(row[f"bsh_{i}"]) for i in range(1, 11)) - float(row["bsr"])) <= 1e-9
    meta = json.loads((study / "measures.csv.meta.json").read_text())
    per_image = json.loads((study / "json" / "g0_t10_r1.json").read_text())
    assert per_image["config_hash"] == meta["config_hash"]
    assert (study / "plots" / "g0_t10_r1_bsh.svg").exists()


def test_eval_and_baseline(study):
    assert cli.main(["eval", "--manifest", str(study / "manifest.csv"),
                     "--config", str(study / "pipe.json"), "--exclude-zero",
                     "--out", str(study / "metrics.csv")]) == 0
    assert cli.main(["baseline-lda", "--manifest", str(study / "manifest.csv"), "--exclude-zero",
                     "--out", str(study / "lda.csv")]) == 0
    for name, method in (("metrics.csv", "pyramid"), ("lda.csv", "lda")):
        header, row = (study / name).read_text().splitlines()
        assert header == "method,ap,iou,bsr_error_pct,bsh_error"
        assert row.split(",")[0] == method


def test_stats(measured, study):
    out = study / "stats.json"
    assert cli.main(["stats", "--measures", str(measured), "--manifest", str(study / "manifest.csv"),
                     "--out", str(out), "--plots", str(study / "stats_plots"),
                     "--study-out", str(study / "study.csv")]) == 0
    result = json.loads(out.read_text())
    assert result["n_samples"] == 20
    assert set(result["traits"]) == {"bsr", *[f"bsh_{i}" for i in range(1, 11)]}
    assert -1 <= result["bsr_vs_intactness"]["pearson_r"] <= 1
    anova = {r["source"]: r for r in result["traits"]["bsr"]["anova"]}
    assert (anova["Genotype"]["df"], anova["Retort"]["df"], anova["Residual"]["df"]) == (1, 4, 10)
    assert (study / "stats_plots" / "heritability.svg").exists()
    assert (study / "study.csv").read_text().startswith("genotype,retort_min,replicate,trait,value\n")


def test_stats_rejects_unbalanced(measured, study, tmp_path):
    rows = measured.read_text().splitlines()
    partial = tmp_path / "partial.csv"
    partial.write_text("\n".join(rows[:-1]) + "\n")
    args = ["stats", "--measures", str(partial), "--manifest", str(study / "manifest.csv"),
            "--out", str(tmp_path / "s.json")]
    assert cli.main(args) == 3
    # dropping the incomplete genotype leaves a single genotype, which still analyses
    assert cli.main(args + ["--drop-incomplete"]) == 0


def test_exit_codes(tmp_path, monkeypatch, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--manifest", "m.csv"])
    assert exc.value.code == 2
    assert cli.main(["eval", "--manifest", str(tmp_path / "missing.csv"),
                     "--config", "x.json", "--out", "o.csv"]) == 3
    (tmp_path / "m.csv").write_text("image_path,label_path\n")
    assert cli.main(["train", "--manifest", str(tmp_path / "m.csv"), "--model", "bean",
                     "--out", str(tmp_path / "w.bswt")]) == 3
    assert "error:" in capsys.readouterr().err

    def diverge(*args, **kwargs):
        raise NonFiniteLoss("loss became nan")

    monkeypatch.setattr(cli, "train_model", diverge)
    (tmp_path / "ok.csv").write_text(
        "image_path,label_path,genotype,retort_min,replicate,partition,intactness\n"
        "a.ppm,a.pgm,G,10,1,train,\n")
    assert cli.main(["train", "--manifest", str(tmp_path / "ok.csv"), "--model", "bean",
                     "--out", str(tmp_path / "w.bswt")]) == 4
