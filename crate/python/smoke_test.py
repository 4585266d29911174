"""Smoke test for the selfgrasp Python module.

Build and install first:  pip install --no-build-isolation ./crates/py
"""

import json
import math

import selfgrasp


def tiny_config():
    cfg = json.loads(selfgrasp.default_config())
    cfg.update(n_env=1, n_obj=2, max_attempts=20, detector_steps_per_success=1,
               evaluator_steps_per_success=1, detector_warmup_steps=2)
    cfg["detector"].update(channels=[2, 3, 3, 2], batch_size=2)
    cfg["evaluator"].update(pretrain_steps=2, min_separation=0.0, batch_size=2)
    cfg["eval"].update(scenes_per_count=2)
    return cfg


def test_loss_primitives():
    assert selfgrasp.alpha_coefficient([1.0, 0.0, 0.5], 3) == [0.0, 0.5, 0.125]
    assert selfgrasp.alpha_coefficient([0.3], 0) == [1.0]
    assert selfgrasp.contrastive_loss([0.0, 0.0], [0.0, 0.0], 0) == 0.0
    assert selfgrasp.contrastive_loss([0.0, 0.0], [0.0, 0.0], 1, margin=1.0) == 0.5
    assert selfgrasp.contrastive_loss([0.0, 0.0], [1.0, 0.0], 1) == 0.0
    assert math.isclose(selfgrasp.contrastive_loss([0.0, 0.0], [0.5, 0.0], 1, form="hinge"), 0.125)


def test_render_top():
    pixels, shape = selfgrasp.render_top(3, seed=4)
    assert shape == (3, 96, 96)
    assert len(pixels) == 3 * 96 * 96
    assert all(0.0 <= p <= 1.0 for p in pixels)
    again, _ = selfgrasp.render_top(3, seed=4)
    assert again == pixels


def test_bad_inputs_raise():
    for call in (lambda: selfgrasp.render_top(1, 0, kind="cube"),
                 lambda: selfgrasp.Trainer('{"n_envs": 1}')):
        try:
            call()
        except ValueError:
            continue
        raise AssertionError("expected ValueError")


def test_tiny_run():
    tr = selfgrasp.Trainer(json.dumps(tiny_config()))
    report = [json.loads(line) for line in tr.run().splitlines()]
    assert report[0]["type"] == "run"
    assert tr.episodes_done == 1
    summary = json.loads(tr.summary())
    trials = [r for r in report if r["type"] == "trial"]
    assert len(trials) == summary["counters"]["trials"]
    rows = tr.evaluate()
    assert [r["objects"] for r in rows] == [1, 2, 3, 4, 5]
    assert all(r["condition2_rate"] >= r["condition1_rate"] for r in rows)


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"{name} ok")
