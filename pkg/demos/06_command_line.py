# The command-line pipeline, driven from Python
#
# Equivalent shell session:
#   osdl gen --out data --users 200 --items 12 --structure tree:3 --sparsity 3
#   osdl train --config config.json
#   osdl predict --dictionary model/dictionary.osdl --ratings model/train.csv \
#                --cells model/test.csv --out model/pred.csv
#   osdl evaluate --predictions model/pred.csv --truth model/test.csv

# %%
import json
import tempfile
from pathlib import Path

from osdl.cli import main

root = Path(tempfile.mkdtemp())
main(["gen", "--out", str(root / "data"), "--users", "200", "--items", "12",
      "--structure", "tree:3", "--sparsity", "3", "--seed", "1"])

# %%
config = {"structure": "tree:3", "coder": {"kappa": 1 / 64}, "learner": {"epochs": 3},
          "dataset": [str(root / "data" / "ratings.csv")], "output_dir": str(root / "model")}
(root / "config.json").write_text(json.dumps(config))
main(["train", "--config", str(root / "config.json")])

# %%
model = root / "model"
main(["predict", "--dictionary", str(model / "dictionary.osdl"), "--ratings",
      str(model / "train.csv"), "--cells", str(model / "test.csv"), "--out", str(model / "pred.csv")])
main(["evaluate", "--predictions", str(model / "pred.csv"), "--truth", str(model / "test.csv")])
print(sorted(p.name for p in model.iterdir()))
