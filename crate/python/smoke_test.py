"""Smoke test for the `steer` extension module (build with `maturin develop`)."""

import math
import os
import tempfile

import steer


def main():
    assert steer.predictive_mean([1.0, 2.0, 3.0]) == 2.0
    assert abs(steer.predictive_variance([1.0, 2.0, 3.0]) - 2.0 / 3.0) < 1e-15
    sigma, u_pa = steer.fuse(0.1, 0.3, 0.25, kappa=2.0)
    assert sigma == 0.5 and abs(u_pa - 0.2) < 1e-15

    data = steer.Dataset.generate(seed=1, tracks=2, samples_per_track=8)
    assert len(data) == 16 and data.image_shape == [1, 56, 96]
    pixels = data.image(0)
    assert len(pixels) == 56 * 96 and all(0.0 <= p <= 1.0 for p in pixels)

    net = steer.Network(seed=3, dropout="elementwise")
    losses = net.train(data, epochs=2, seed=4)
    assert len(losses) == 3 and all(math.isfinite(x) for x in losses)

    mean, var, samples = net.mc(pixels, passes=8, seed=5)
    assert len(samples) == 8 and var >= 0.0
    assert net.mc(pixels, passes=8, seed=5) == (mean, var, samples)
    assert math.isfinite(net.mue(data, passes=4))

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.ckpt")
        net.save(path)
        back = steer.Network.load(path)
        assert back.predict(pixels) == net.predict(pixels)
        assert back.dropout == "elementwise" and back.epochs_completed == 2

    steps = net.simulate(track_seed=2, kappa=1.0, passes=4, human="corrective", ticks=10)
    assert len(steps) == 10
    for s in steps:
        assert abs(s["u_PA"] - ((1 - s["sigma"]) * s["u_N"] + s["sigma"] * s["u_H"])) < 1e-12
    print("steer smoke test ok")


if __name__ == "__main__":
    main()
