"""Builds the extension, imports it from a temp dir and runs a short pipeline."""

import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module(tmp):
    subprocess.run(["cargo", "build", "-p", "fairsinkhorn-python"], cwd=ROOT, check=True)
    shutil.copy(ROOT / "target" / "debug" / "libpyfairsinkhorn.so", tmp / "pyfairsinkhorn.so")
    sys.path.insert(0, str(tmp))
    import pyfairsinkhorn

    return pyfairsinkhorn


def check_metrics(fs):
    assert fs.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert math.isclose(fs.es_auc(0.8, [0.7, 0.9]), 0.8 / 1.2)
    scores = [0.9, 0.2, 0.8, 0.7, 0.1, 0.6]
    labels = [1, 0, 1, 0, 0, 1]
    groups = [0, 0, 0, 1, 1, 1]
    assert math.isclose(fs.dpd(scores, labels, groups), 0.0)
    report = fs.evaluate(scores, labels, groups, "group", level_names=["a", "b"])
    assert set(report) >= {"auc", "es_auc", "dpd", "deodds"}
    try:
        fs.auc([0.1, 0.2], [1, 1])
    except ValueError:
        pass
    else:
        raise AssertionError("single-class AUC should raise")


def check_transport(fs):
    a, b = [0.0, 1.0, 2.0], [0.5, 1.5, 2.5]
    exact = fs.exact_wasserstein_1d(a, b)
    assert math.isclose(exact, 0.25)
    assert fs.sinkhorn_distance(a, a, debias=True) < 1e-9
    approx = fs.sinkhorn_distance(a, b, epsilon=1e-3, epsilon_scale="absolute", debias=True)
    assert abs(approx - exact) < 1e-2, approx
    ga, gb = fs.sinkhorn_grad_support(a, b)
    assert len(ga) == 3 and len(gb) == 3


def check_loss(fs):
    image = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
    text = [[1.0, 0.1], [0.1, 1.0], [0.9, 1.0]]
    plain = fs.fairclip_loss(image, text)
    assert plain["loss"] == plain["clip_loss"]
    fair = fs.fairclip_loss(image, text, groups={0: (image[:2], text[:2])}, lambda_fair=0.5)
    assert math.isclose(fair["loss"], fair["clip_loss"] + 0.5 * sum(fair["sinkhorn_terms"].values()))
    assert len(fair["image_grad"]) == 3 and 0 in fair["group_grads"]


def check_pipeline(fs, tmp):
    cfg = fs.RunConfig.load(ROOT / "configs" / "toy.toml", seed=3, out=tmp / "run")
    assert len(cfg.hash()) == 64 and cfg.seed == 3
    data_dir = fs.generate(cfg)
    assert (pathlib.Path(data_dir) / "train.jsonl").exists()
    steps = fs.train(cfg)
    assert steps and all(math.isfinite(s["total"]) for s in steps)
    reports = fs.probe(cfg)
    assert {r["attribute_name"] for r in reports} == {"race", "gender"}
    zs = fs.zeroshot(cfg)
    assert len(zs) == len(reports)
    model = fs.DualEncoder.load(tmp / "run" / "train" / "checkpoint_final.bin")
    dims = cfg.to_dict()["data"]["image_dim"]
    emb = model.encode_image([[0.0] * dims, [1.0] * dims])
    assert len(emb) == 2 and model.num_params > 0


def main():
    with tempfile.TemporaryDirectory() as d:
        tmp = pathlib.Path(d)
        fs = load_module(tmp)
        check_metrics(fs)
        check_transport(fs)
        check_loss(fs)
        check_pipeline(fs, tmp)
    print("smoke test ok")


if __name__ == "__main__":
    main()
