"""End-to-end orchestration: scenes -> decoder -> predictions -> report."""
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import body_model as bm
from .decoder import decoder_forward, regress, sine_position_encoding
from .errors import ConfigError
from .losses import total_loss
from .matching import hungarian
from .metrics import iou, joint_errors_mm, mpjpe, pa_mpjpe, pve
from .persons import PersonSet
from .provider import SceneInteractionSource, detect_objects

DETECTION_IOU = 0.5


def build_model(config):
    b = config.body
    if b.model_path:
        model = bm.load_model(b.model_path)
    else:
        model = bm.make_toy_model(b.seed, b.vertex_count, b.joint_count, b.shape_count, b.pose_correctives)
    if model.joint_count != b.joint_count or model.shape_count != b.shape_count:
        raise ConfigError(
            f"body model has K={model.joint_count}, B={model.shape_count}; "
            f"config says K={b.joint_count}, B={b.shape_count}"
        )
    return model


def synth_image_tokens(scene, config):
    """Stand-in encoder output.

    One token per person and per object (sinusoidal encoding of the box
    center plus half-weighted encoding of its size), a grid of background
    tokens, and seeded Gaussian noise.
    """
    d = config.decoder.d_model
    boxes = [p.box for p in scene.persons] + [o.box for o in scene.objects]
    g = config.image_grid
    parts = []
    if boxes:
        b = np.stack(boxes)
        parts.append(sine_position_encoding(b[:, :2], d) + 0.5 * sine_position_encoding(b[:, 2:], d))
    if g:
        c = (np.arange(g) + 0.5) / g
        grid = np.stack(np.meshgrid(c, c, indexing="xy"), axis=-1).reshape(-1, 2)
        parts.append(sine_position_encoding(grid, d))
    if not parts:
        parts.append(np.zeros((1, d)))
    tokens = np.concatenate(parts)
    rng = np.random.default_rng([scene.seed, 0x1A6E])
    return tokens + rng.normal(0.0, config.image_noise, size=tokens.shape)


def check_compatible(weights, model, config):
    problems = []
    if weights.config != config.decoder:
        problems.append(f"decoder config {weights.config} != run config {config.decoder}")
    if weights.joint_count != model.joint_count:
        problems.append(f"joint_count {weights.joint_count} != {model.joint_count}")
    if weights.shape_count != model.shape_count:
        problems.append(f"shape_count {weights.shape_count} != {model.shape_count}")
    if weights.feature_dim != config.provider.feature_dim:
        problems.append(f"feature_dim {weights.feature_dim} != {config.provider.feature_dim}")
    if problems:
        raise ConfigError("checkpoint/config mismatch: " + "; ".join(problems))


@dataclass(eq=False)
class ForwardResult:
    predictions: PersonSet       # every query, unfiltered
    kept: np.ndarray             # indices passing the confidence threshold
    layer_boxes: list            # reference boxes after each layer
    layer_predictions: list      # PersonSet per layer

    @property
    def filtered(self):
        return self.predictions.subset(self.kept)

    def to_dict(self):
        return {
            "predictions": self.predictions.to_dict(),
            "kept": self.kept.tolist(),
            "layer_boxes": [b.tolist() for b in self.layer_boxes],
        }

    @classmethod
    def from_dict(cls, d, model):
        preds = PersonSet.from_dict(d["predictions"], model.joint_count, model.shape_count, model.vertex_count)
        return cls(preds, np.asarray(d["kept"], dtype=np.int64),
                   [np.asarray(b) for b in d.get("layer_boxes", [])], [])


def filter_confidence(conf, threshold):
    return np.flatnonzero(np.asarray(conf) >= threshold)


def run_forward(scene, weights, config, model):
    """Full decoder forward on one scene with the synthetic encoder and provider."""
    check_compatible(weights, model, config)
    tokens = synth_image_tokens(scene, config)
    objects = detect_objects(scene, config.detector_noise, config.detector_max_out)
    source = SceneInteractionSource(scene, config.provider, objects)
    states = decoder_forward(weights, tokens, source)
    layer_preds = [regress(s.queries, weights.heads, model, config.focal, config.img_extent) for s in states]
    final = layer_preds[-1]
    return ForwardResult(final, filter_confidence(final.conf, config.conf_threshold),
                         [s.ref_boxes for s in states], layer_preds)


def run_forward_all(scenes, weights, config, model, workers=1):
    """Per-scene forward passes, optionally threaded; output order is scene order."""
    if workers <= 1:
        return [run_forward(s, weights, config, model) for s in scenes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: run_forward(s, weights, config, model), scenes))


def _mean_or_none(values):
    return float(np.mean(values)) if values else None


def evaluate_scene(scene, result, config):
    gt = scene.ground_truth()
    pred = result.filtered
    n_gt, n_pred = len(gt), len(pred)
    K = gt.joints.shape[1] if n_gt else pred.joints.shape[1]
    if n_gt and n_pred:
        dist = np.linalg.norm(pred.root_positions()[:, None] - gt.root_positions()[None], axis=-1)
        pairs = hungarian(dist).pairs
    else:
        pairs = []
    mpjpes, pas, pves = [], [], []
    correct = 0
    tp = 0
    for i, j in pairs:
        mpjpes.append(mpjpe(pred.joints[i], gt.joints[j]))
        pas.append(pa_mpjpe(pred.joints[i], gt.joints[j]))
        pves.append(pve(pred.vertices[i], gt.vertices[j]))
        correct += int((joint_errors_mm(pred.joints[i], gt.joints[j]) <= config.pck_threshold_mm).sum())
        if iou(pred.boxes[i], gt.boxes[j]) >= DETECTION_IOU:
            tp += 1
    matched_joints = len(pairs) * K
    loss = total_loss(result.predictions, gt, config.loss_weights, config.cost_weights)
    return {
        "seed": scene.seed,
        "n_gt": n_gt,
        "n_pred": n_pred,
        "n_matched": len(pairs),
        "pairs": [list(p) for p in pairs],
        "mpjpe": _mean_or_none(mpjpes),
        "pa_mpjpe": _mean_or_none(pas),
        "pve": _mean_or_none(pves),
        "correct_joints": correct,
        "matched_joints": matched_joints,
        "gt_joints": n_gt * K,
        "pck_match": correct / matched_joints if matched_joints else None,
        "pck_all": correct / (n_gt * K) if n_gt else None,
        "true_positives": tp,
        "precision": tp / n_pred if n_pred else None,
        "recall": tp / n_gt if n_gt else None,
        "loss": {"terms": loss.terms, "weighted": loss.weighted, "total": loss.total},
    }


def aggregate(per_scene):
    """Pair-weighted means for per-match metrics, count ratios for the rest."""
    n_matched = sum(s["n_matched"] for s in per_scene)

    def weighted(key):
        if not n_matched:
            return None
        return sum(s[key] * s["n_matched"] for s in per_scene if s["n_matched"]) / n_matched

    def ratio(num, den):
        d = sum(s[den] for s in per_scene)
        return sum(s[num] for s in per_scene) / d if d else None

    losses = [s["loss"]["total"] for s in per_scene]
    return {
        "scenes": len(per_scene),
        "n_matched": n_matched,
        "mpjpe": weighted("mpjpe"),
        "pa_mpjpe": weighted("pa_mpjpe"),
        "pve": weighted("pve"),
        "pck_match": ratio("correct_joints", "matched_joints"),
        "pck_all": ratio("correct_joints", "gt_joints"),
        "precision": ratio("true_positives", "n_pred"),
        "recall": ratio("true_positives", "n_gt"),
        "loss_total": float(np.mean(losses)) if losses else None,
    }


def evaluate(scenes, results, config):
    if len(scenes) != len(results):
        raise ConfigError(f"{len(scenes)} scenes but {len(results)} prediction entries")
    per_scene = [evaluate_scene(s, r, config) for s, r in zip(scenes, results)]
    return {
        "config": {"conf_threshold": config.conf_threshold, "pck_threshold_mm": config.pck_threshold_mm},
        "per_scene": per_scene,
        "aggregate": aggregate(per_scene),
    }


def report_json(report):
    return json.dumps(report, sort_keys=True, indent=1)


def predictions_json(results, config):
    w, h = config.image_size
    out = []
    for r in results:
        d = r.to_dict()
        b = r.predictions.boxes
        d["boxes_px"] = (b * np.array([w, h, w, h])).tolist()
        out.append(d)
    return json.dumps(out, sort_keys=True)


def load_predictions(path, model):
    try:
        with open(path) as f:
            raw = json.load(f)
        return [ForwardResult.from_dict(d, model) for d in raw]
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read predictions {path}: {exc}") from exc


def write_obj(path, vertices, faces):
    with open(path, "w") as f:
        for v in vertices:
            f.write(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}\n")
        for face in faces if faces is not None else ():
            f.write(f"f {face[0] + 1} {face[1] + 1} {face[2] + 1}\n")


def export_obj(results, model, out_dir):
    """One OBJ per kept person per scene, camera-space vertices in meters."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for s, r in enumerate(results):
        pred = r.filtered
        for i in range(len(pred)):
            path = os.path.join(out_dir, f"scene{s:04d}_person{i:02d}.obj")
            write_obj(path, pred.vertices[i] + pred.transl[i], model.faces)
            written.append(path)
    return written


ABLATIONS = {
    "no_interaction": lambda cfg: {"interaction_start_layer": cfg.n_layers},
    "igr_only": lambda cfg: {"use_cie": False},
    "cie_igr": lambda cfg: {},
}


def ablation_table(scene, weights, config, model):
    """Run interaction ablations and start-layer sweeps on one scene.

    Untrained weights make no claim about which variant is better; the table
    shows that each variant runs and how far its final queries move from the
    no-interaction baseline.
    """
    import dataclasses

    def run(**changes):
        cfg = dataclasses.replace(weights.config, **changes)
        w = dataclasses.replace(weights, config=cfg)
        tokens = synth_image_tokens(scene, config)
        objects = detect_objects(scene, config.detector_noise, config.detector_max_out)
        source = SceneInteractionSource(scene, config.provider, objects)
        return decoder_forward(w, tokens, source)[-1].queries

    base = run(**ABLATIONS["no_interaction"](weights.config))
    rows = []
    for name, change in ABLATIONS.items():
        q = run(**change(weights.config))
        rows.append({"variant": name, "delta_vs_no_interaction": float(np.abs(q - base).max())})
    for start in range(weights.config.n_layers + 1):
        q = run(interaction_start_layer=start)
        rows.append({"variant": f"start_layer={start}", "delta_vs_no_interaction": float(np.abs(q - base).max())})
    return rows
