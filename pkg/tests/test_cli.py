import json

import jsonschema
import numpy as np
import pandas as pd
import pytest

from tent import checkpoint
from tent.attention import schema
from tent.cli import evaluate_split, main
from tent.config import RunConfig, load_config
from tent.fixture import write_fixture
from tent.metrics import mae, mse
from tent.model import predict
from tent.pipeline import prepare_files


def tiny_config(tmp_path, **overrides):
    data, coords = write_fixture(tmp_path / "data", n_steps=60)
    cfg = {
        "paths": {"data_csv": str(data), "coords_csv": str(coords), "out_dir": "run"},
        "model": {"H": 1, "d_k": 2, "ffn_hidden": 4},
        "train": {"max_epochs": 300, "patience": 300, "batch_size": 8, "fixed_lr": 0.01},
        "pipeline": {"lag": 4, "horizon": 1, "target_station": "charlie",
                     "target_feature": "temperature", "split_sizes": [8, 4, None],
                     "periodicity": False},
        "seed": 3,
    }
    for section, values in overrides.items():
        cfg[section].update(values)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    path = tiny_config(tmp)
    assert main(["train", "--config", str(path)]) == 0
    return path, tmp / "run"


def test_defaults_match_reference_table():
    cfg = RunConfig()
    assert (cfg.model.n_layers, cfg.model.H, cfg.model.d_k, cfg.model.ffn_hidden,
            cfg.train.batch_size) == (1, 8, 16, 32, 96)
    assert cfg.pipeline.lag == 16 and cfg.pipeline.target_station == "Vancouver"


def test_train_outputs(trained):
    _, run = trained
    assert {p.name for p in run.iterdir()} >= {"checkpoint.json", "train_log.csv",
                                               "manifest.json"}
    ck = checkpoint.load(run / "checkpoint.json")
    assert (ck.config.T, ck.config.C, ck.config.F, ck.config.H) == (4, 3, 5, 1)
    assert ck.data == json.loads((run / "manifest.json").read_text())
    log = pd.read_csv(run / "train_log.csv")
    assert list(log.columns) == ["epoch", "step", "lr", "train_mse", "val_mse", "best"]


def test_checkpoint_bit_exact(trained, tmp_path):
    _, run = trained
    ck = checkpoint.load(run / "checkpoint.json")
    checkpoint.save(ck, tmp_path / "copy.json")
    back = checkpoint.load(tmp_path / "copy.json")
    assert all(np.array_equal(back.params[k], ck.params[k]) for k in ck.params)
    assert (tmp_path / "copy.json").read_text() == (run / "checkpoint.json").read_text()


def test_train_is_deterministic(tmp_path):
    path = tiny_config(tmp_path, train={"max_epochs": 5})
    texts = []
    for out in ("a", "b"):
        assert main(["train", "--config", str(path), "--out", str(tmp_path / out)]) == 0
        texts.append([(tmp_path / out / n).read_text() for n in ("checkpoint.json", "train_log.csv")])
    assert texts[0] == texts[1]


def test_seed_flag_changes_weights(tmp_path):
    path = tiny_config(tmp_path, train={"max_epochs": 1})
    main(["train", "--config", str(path), "--out", str(tmp_path / "a")])
    main(["train", "--config", str(path), "--out", str(tmp_path / "b"), "--seed", "99"])
    a = checkpoint.load(tmp_path / "a" / "checkpoint.json")
    b = checkpoint.load(tmp_path / "b" / "checkpoint.json")
    assert b.seed == 99 and not np.array_equal(a.params["out.w"], b.params["out.w"])


def test_missing_data_file(tmp_path, capsys):
    path = tiny_config(tmp_path)
    cfg = json.loads(path.read_text())
    cfg["paths"]["data_csv"] = str(tmp_path / "nowhere.csv")
    path.write_text(json.dumps(cfg))
    assert main(["train", "--config", str(path)]) == 2
    assert "nowhere.csv" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    path = tiny_config(tmp_path, model={"heads": 2})
    assert main(["train", "--config", str(path)]) == 2
    assert "model.heads" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_divergence_exit_code(tmp_path):
    path = tiny_config(tmp_path, train={"fixed_lr": 1e300, "max_epochs": 3})
    assert main(["train", "--config", str(path)]) == 3


def test_evaluate_matches_library(trained, capsys):
    path, run = trained
    assert main(["evaluate", "--config", str(path), "--checkpoint",
                 str(run / "checkpoint.json")]) == 0
    report = json.loads((run / "metrics_test.json").read_text())
    ck = checkpoint.load(run / "checkpoint.json")
    cfg = load_config(path)
    data = prepare_files(cfg.paths.data_csv, cfg.paths.coords_csv, cfg.pipeline)
    pred = data.inverse_target(predict(data.test.X, ck.params, ck.config)[:, 0])
    assert report["mae"] == mae(pred, data.test.y_raw)
    assert report["mse"] == mse(pred, data.test.y_raw)
    assert report["n_samples"] == ck.data["split_sizes"]["test"]
    assert report["target"] == "charlie" and report["horizon"] == 1


def periodic_config(tmp_path, period=6, n=60):
    # every window recurs in all three splits, so best-validation weights also fit train
    t = np.arange(n) % period
    idx = pd.date_range("2020-01-01", periods=n, freq="h").strftime("%Y-%m-%dT%H:%M:%SZ")
    frame = pd.DataFrame({"a:temperature": 10.0 + 3.0 * t, "a:wind": np.cos(t),
                          "a:pressure": 1000.0 + t % 2,
                          "b:temperature": 20.0 - t * t / 5.0, "b:wind": np.sin(t),
                          "b:pressure": 1000.0 - t % 3},
                         index=pd.Index(idx, name="timestamp"))
    frame.to_csv(tmp_path / "periodic.csv")
    pd.DataFrame({"station": ["a", "b"], "lat": [40.0, 41.0], "lon": [-3.0, -4.0]}).to_csv(
        tmp_path / "periodic_coords.csv", index=False)
    path = tiny_config(tmp_path, pipeline={"target_station": "b"})
    cfg = json.loads(path.read_text())
    cfg["paths"].update(data_csv="periodic.csv", coords_csv="periodic_coords.csv")
    cfg["model"].update(H=2, d_k=4, ffn_hidden=8)
    path.write_text(json.dumps(cfg))
    return path


def test_memorised_train_split(tmp_path):
    path = periodic_config(tmp_path)
    assert main(["train", "--config", str(path)]) == 0
    ck = checkpoint.load(tmp_path / "run" / "checkpoint.json")
    cfg = load_config(path)
    data = prepare_files(cfg.paths.data_csv, cfg.paths.coords_csv, cfg.pipeline)
    report = evaluate_split(data, ck, "train")
    spread = float(np.ptp(data.train.y_raw))
    assert report["mae"] < 0.02 * spread, (report, spread)


def test_evaluate_shape_mismatch(trained, tmp_path):
    path, run = trained
    other = tiny_config(tmp_path, pipeline={"lag": 5})
    assert main(["evaluate", "--config", str(other), "--checkpoint",
                 str(run / "checkpoint.json")]) == 2


def windows_csv(path, cfg, starts, T):
    frame = pd.read_csv(cfg.paths.data_csv)
    parts = []
    for w, s in enumerate(starts):
        part = frame.iloc[s:s + T].copy()
        part.insert(1, "window", w)
        parts.append(part)
    pd.concat(parts).to_csv(path, index=False)


def test_predict(trained, tmp_path):
    path, run = trained
    cfg = load_config(path)
    windows_csv(tmp_path / "w.csv", cfg, [0, 10, 20], 4)
    outs = []
    for name in ("p1.csv", "p2.csv"):
        assert main(["predict", "--checkpoint", str(run / "checkpoint.json"),
                     "--input", str(tmp_path / "w.csv"), "--out", str(tmp_path / name)]) == 0
        outs.append((tmp_path / name).read_text())
    assert outs[0] == outs[1]
    df = pd.read_csv(tmp_path / "p1.csv", float_precision="round_trip")
    assert len(df) == 3 and (df["horizon"] == 1).all()
    # window 0 is the first training window
    ck = checkpoint.load(run / "checkpoint.json")
    data = prepare_files(cfg.paths.data_csv, cfg.paths.coords_csv, cfg.pipeline)
    scaled = predict(data.train.X[:1], ck.params, ck.config)[0, 0]
    assert df["prediction_scaled"][0] == scaled
    assert df["prediction"][0] == data.inverse_target(np.array([scaled]))[0]
    assert df["timestamp"][0] == "2016-01-01T04:00:00Z"


def test_predict_wrong_length(trained, tmp_path, capsys):
    path, run = trained
    windows_csv(tmp_path / "w.csv", load_config(path), [0], 3)
    assert main(["predict", "--checkpoint", str(run / "checkpoint.json"),
                 "--input", str(tmp_path / "w.csv"), "--out", str(tmp_path / "p.csv")]) == 2
    assert "T=4" in capsys.readouterr().err


def test_attention(trained):
    path, run = trained
    assert main(["attention", "--config", str(path), "--checkpoint",
                 str(run / "checkpoint.json")]) == 0
    doc = json.loads((run / "attention.json").read_text())
    jsonschema.validate(doc, schema())
    ck = checkpoint.load(run / "checkpoint.json")
    assert doc["heads"] == ck.config.H and len(doc["stations"]) == ck.config.C
    for row in doc["as_ch"]:
        assert abs(sum(row) - ck.config.T ** 2) <= 1e-9
    assert (run / "attention.svg").read_text().startswith("<svg")


def test_attention_unwritable_output(trained, tmp_path):
    path, run = trained
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["attention", "--config", str(path), "--checkpoint",
                 str(run / "checkpoint.json"), "--out", str(blocker / "sub")]) == 4
