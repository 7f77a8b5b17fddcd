"""Command-line interface.

Exit codes: 0 success, 1 self-test failure, 2 configuration error.
"""
import argparse
import json
import sys

from . import pipeline
from .config import load_config
from .decoder import init_weights, load_checkpoint, save_checkpoint
from .errors import ConfigError
from .scenes import gen_scenes, load_scenes, scenes_to_json
from .selftest import selftest


def _emit(text, out):
    if out:
        with open(out, "w") as f:
            f.write(text)
            f.write("\n")
    else:
        sys.stdout.write(text + "\n")


def cmd_gen(args, cfg):
    model = pipeline.build_model(cfg)
    _emit(scenes_to_json(gen_scenes(cfg, args.count, model)), args.out)
    return 0


def cmd_init_weights(args, cfg):
    if not args.out:
        raise ConfigError("init-weights needs --out for the checkpoint file")
    weights = init_weights(cfg.decoder, cfg.seed, cfg.body.joint_count, cfg.body.shape_count,
                           cfg.provider.feature_dim)
    save_checkpoint(weights, args.out)
    sys.stdout.write(json.dumps({"checkpoint": args.out, "config": cfg.decoder.to_dict(),
                                 "seed": cfg.seed}, sort_keys=True) + "\n")
    return 0


def cmd_forward(args, cfg):
    model = pipeline.build_model(cfg)
    scenes = load_scenes(args.scenes, model)
    weights = load_checkpoint(args.weights)
    results = pipeline.run_forward_all(scenes, weights, cfg, model, workers=args.workers)
    _emit(pipeline.predictions_json(results, cfg), args.out)
    return 0


def cmd_eval(args, cfg):
    model = pipeline.build_model(cfg)
    scenes = load_scenes(args.scenes, model)
    results = pipeline.load_predictions(args.predictions, model)
    # re-apply the threshold from this run's config
    for r in results:
        r.kept = pipeline.filter_confidence(r.predictions.conf, cfg.conf_threshold)
    _emit(pipeline.report_json(pipeline.evaluate(scenes, results, cfg)), args.out)
    return 0


def cmd_selftest(args, cfg):
    passed, rows = selftest(inject_fault=args.inject_fault, out=lambda s: sys.stderr.write(s + "\n"))
    _emit(json.dumps({"passed": passed, "suites": rows}, sort_keys=True, indent=1), args.out)
    return 0 if passed else 1


def cmd_export_obj(args, cfg):
    model = pipeline.build_model(cfg)
    results = pipeline.load_predictions(args.predictions, model)
    for r in results:
        r.kept = pipeline.filter_confidence(r.predictions.conf, cfg.conf_threshold)
    written = pipeline.export_obj(results, model, args.out_dir)
    sys.stdout.write(json.dumps({"files": written}, indent=1) + "\n")
    return 0


def cmd_ablate(args, cfg):
    model = pipeline.build_model(cfg)
    scenes = load_scenes(args.scenes, model)
    weights = load_checkpoint(args.weights)
    pipeline.check_compatible(weights, model, cfg)
    rows = pipeline.ablation_table(scenes[args.scene_index], weights, cfg, model)
    _emit(json.dumps(rows, indent=1), args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="interhmr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="RunConfig JSON file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="write output here instead of stdout")
        p.set_defaults(fn=fn)
        return p

    p = add("gen", cmd_gen, "generate synthetic scenes")
    p.add_argument("--count", type=int, default=10)
    add("init-weights", cmd_init_weights, "write a seeded decoder checkpoint")
    p = add("forward", cmd_forward, "run the decoder on scenes")
    p.add_argument("--scenes", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--workers", type=int, default=1)
    p = add("eval", cmd_eval, "evaluate predictions against scene ground truth")
    p.add_argument("--scenes", required=True)
    p.add_argument("--predictions", required=True)
    p = add("selftest", cmd_selftest, "run the built-in oracle suites")
    p.add_argument("--inject-fault", action="store_true", help="flip one mask bit (negative control)")
    p = add("export-obj", cmd_export_obj, "write OBJ meshes of kept predictions")
    p.add_argument("--predictions", required=True)
    p.add_argument("--out-dir", required=True)
    p = add("ablate", cmd_ablate, "interaction ablation / start-layer sweep on one scene")
    p.add_argument("--scenes", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--scene-index", type=int, default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        return args.fn(args, cfg)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
