"""End-to-end run on synthetic data: generate, train, evaluate, report.

Run:  python3 demos/03_train_and_evaluate.py
The same flow is available from the command line:

    tve synth --out /tmp/tve-demo/data --pairs 16 --frames 4 --tokens 4 --dim 16 --seed 5
    tve train --videos ... --texts ... --manifest ... --out-dir /tmp/tve-demo/run \
        --dim 16 --frames 4 --tokens 4 --heads 2 --temporal-layers 1 --centers 2 --epochs 20
    tve eval --checkpoint /tmp/tve-demo/run/checkpoint.tvck --videos ... --texts ... --manifest ...
"""

import tempfile
from pathlib import Path

from tve import dataio
from tve import retrieval
from tve import train as tr

root = Path(tempfile.mkdtemp(prefix="tve-demo-"))
synth = dataio.SyntheticConfig(
    num_concepts=10, num_pairs=16, frames=4, tokens=4, dim=16, noise=0.02, seed=5
)
videos, texts, manifest = dataio.synthesize_dataset(synth, root / "data")
print("dataset under", root / "data")

cfg = tr.TrainConfig(
    batch_size=16,
    epochs=20,
    learning_rate=2e-3,
    dim=16,
    frames=4,
    tokens=4,
    heads=2,
    temporal_layers=1,
    centers=2,
    w=0.5,
    videos=str(videos),
    texts=str(texts),
    manifest=str(manifest),
    out_dir=str(root / "run"),
    seed=1,
)
result = tr.train(cfg, log=print)
print("checkpoint:", result.checkpoint_path)

# A checkpoint restores bit-identically; evaluation is pure numpy.
checkpoint = tr.load_checkpoint(result.checkpoint_path)
params, _ = checkpoint.restore()
dataset = tr.load_dataset(cfg.videos, cfg.texts, cfg.manifest)
reports, sims, pairing = tr.evaluate_split(
    params, checkpoint.config.model_config(), dataset, "train", w=0.5
)
print(retrieval.format_report_table(reports))
print("machine record:")
print(retrieval.machine_record(reports), end="")
