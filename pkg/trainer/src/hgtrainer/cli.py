"""Command line entry points.

    hgtrain surrogate --dataset DIR --out DIR    train the signal model and
                                                 export attention/embeddings
    hgtrain victim --dataset DIR --model NAME    train an evaluation model and
                   --out DIR                     export test predictions

Exit codes: 0 success, 1 bad input or configuration, 2 runtime faults
(including training divergence, which also prints the loss trace).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import torch

from . import export
from .data import load_graph_dir
from .errors import ConfigError, DivergenceError, TrainerError
from .train import MODEL_DEFAULTS, TrainRun, train

log = logging.getLogger("hgtrainer")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hgtrain", description="Train heterogeneous GNNs on poisoning datasets.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--dataset", required=True, help="dataset directory")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--epochs", type=int, default=400)
        sp.add_argument("--patience", type=int, default=30)
        sp.add_argument("--lr", type=float, default=1e-3)

    sp = sub.add_parser("surrogate", help="train the attention-exporting model")
    common(sp)

    sp = sub.add_parser("victim", help="train a model and export test predictions")
    common(sp)
    sp.add_argument("--model", required=True, choices=sorted(MODEL_DEFAULTS))
    return p


def _run(args) -> dict:
    g = load_graph_dir(args.dataset)
    model = "simplehgn" if args.command == "surrogate" else args.model
    run = TrainRun(model=model, seed=args.seed, epochs=args.epochs,
                   patience=args.patience, lr=args.lr)
    result = train(g, run)
    log.info("%s: %d epochs, best val loss %.4f at epoch %d",
             model, result.epochs_run, result.val_loss[result.best_epoch], result.best_epoch)
    out = {
        "command": args.command,
        "model": model,
        "epochs_run": result.epochs_run,
        "best_epoch": result.best_epoch,
        "best_val_loss": result.val_loss[result.best_epoch],
    }
    if args.command == "surrogate":
        export.export_signals(result, args.out)
        out["signals"] = args.out
    else:
        export.export_predictions(result, args.out)
        out["predictions"] = f"{args.out}/predictions.csv"
    export.export_manifest(result, args.out, args.dataset)
    return out


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    torch.set_num_threads(1)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        result = _run(args)
    except DivergenceError as exc:
        log.error("%s", exc)
        for i, v in enumerate(exc.trace):
            print(f"epoch {i}: loss {v}", file=sys.stderr)
        return 2
    except TrainerError as exc:
        log.error("%s", exc)
        return 1
    except OSError as exc:
        log.error("%s", exc)
        return 2
    except Exception:
        log.exception("unexpected failure")
        return 2
    print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
