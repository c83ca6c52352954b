"""Train a linear baseline and the full model on the two-tone task.

The series has a loud tone and a tone 100x quieter. The script prints how
much of the quiet tone's amplitude each model reproduces on the test split.

    python demos/two_tone_rescue.py [--seed 0] [--epochs 15] [--placement high-low]
"""

import argparse

from amplifier import experiments as ex
from amplifier.training import TrainConfig, evaluate, train


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=15)
    parser.add_argument("--placement", choices=("low-high", "high-low"), default="low-high")
    args = parser.parse_args()

    task = ex.TwoToneTask(placement=args.placement)
    strong, weak = task.bins()
    splits = task.splits(args.seed)
    cfg = TrainConfig(lr=3e-3, max_epochs=args.epochs, patience=args.epochs, seed=args.seed)
    print(f"loud tone at bin {strong}, quiet tone at bin {weak} "
          f"(amplitudes {task.strong_amp} and {task.weak_amp})")

    for name in ("baseline", "wo-eat", "full"):
        kw = {} if name == "baseline" else {"ffn_hidden": 64}
        model = ex.make_variant(name, 1, task.lookback, task.horizon, args.seed, **kw)
        train(model, splits.train, splits.val, cfg)
        rows = ex.frame_spectrum_report(model, splits.test)
        mse = evaluate(model, splits.test)["mse"]
        print(f"{name:>9}: quiet-tone amplitude {ex.amplitude_ratio(rows, weak):6.1%} of truth, "
              f"loud-tone {ex.amplitude_ratio(rows, strong):6.1%}, test mse {mse:.3e}")


if __name__ == "__main__":
    main()
