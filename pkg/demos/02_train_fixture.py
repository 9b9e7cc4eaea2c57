"""Train a small model on the bundled three-station fixture and inspect it.

The target city follows 0.5*alpha(t-4) + 0.5*bravo(t-8) plus noise, so a good
model should lean on those two stations. Takes about half a minute.

Run:  python3 demos/02_train_fixture.py [out_dir]
"""

import sys
from pathlib import Path

from tent.attention import AttentionRecord, collect_attention, export_attention
from tent.config import load_config
from tent.metrics import mae, mse, persistence_forecast
from tent.model import init_params, predict
from tent.pipeline import prepare_files
from tent.training import train

root = Path(__file__).resolve().parents[1]
out = Path(sys.argv[1]) if len(sys.argv) > 1 else root / "runs" / "demo"
out.mkdir(parents=True, exist_ok=True)

cfg = load_config(root / "configs" / "fixture.json")
data = prepare_files(cfg.paths.data_csv, cfg.paths.coords_csv, cfg.pipeline)
print("features:", data.features)
print("windows (train/val/test):", len(data.train), len(data.val), len(data.test))

model_cfg = cfg.model_config(*data.shape[1:])
result = train(init_params(model_cfg, cfg.seed), model_cfg, data.train, data.val,
               cfg.train_config(), log_path=out / "train_log.csv")
print(f"best epoch {result.best_epoch} of {len(result.log)}, val mse {result.best_val_mse:.5f}")

pred = data.inverse_target(predict(data.test.X, result.params, model_cfg)[:, 0])
naive = data.inverse_target(persistence_forecast(data.test.X, data.target_index))
y = data.test.y_raw
print(f"test  model  mae {mae(pred, y):.3f}  mse {mse(pred, y):.3f}")
print(f"test  naive  mae {mae(naive, y):.3f}  mse {mse(naive, y):.3f}")

S = collect_attention(data.test.X, result.params, model_cfg)
record = AttentionRecord(S, data.stations, data.test.horizon, data.test.target_station,
                         data.coords)
for h, row in enumerate(record.as_ch):
    print(f"head {h}:", {s: round(float(v), 1) for s, v in zip(data.stations, row)})
export_attention(record, out / "attention.json", out / "attention.svg")
print("wrote", out / "attention.svg")
