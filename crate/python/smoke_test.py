"""Smoke test for the rodservo Python module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist && pip install dist/rodservo-*.whl
"""

import math
import tempfile
from pathlib import Path

import rodservo


def close(a, b, tol=1e-12):
    return all(abs(x - y) <= tol for x, y in zip(a, b))


def main():
    config = rodservo.RunConfig("run.max_steps = 200\n")
    assert config.max_steps == 200

    line = rodservo.render_centerline((0.45, 0.0, 0.0), config)
    assert len(line) == 100
    assert close(line[0], (40.0, 160.0), 1e-9)

    pose, applied, clamped = rodservo.apply_command((0.45, 0.0, 0.0), [0.01, 0.0, 0.0])
    assert not clamped and abs(pose[0] - 0.46) < 1e-12

    model = rodservo.FeatureModel.fit(config, samples=2000, seed=0, p=6)
    s = model.extract(line)
    assert len(s) == 6 and len(model.reconstruct(s)) == 100

    # Filter on a fixed linear map recovers it.
    truth = [[1.0, -2.0, 0.5], [0.3, 0.0, 1.0], [2.0, 1.0, -1.0], [0.0, 0.7, 0.2], [-1.0, 0.4, 0.9], [0.5, 0.5, 0.5]]
    f = rodservo.AdaptiveKalmanFilter([[0.0] * 3 for _ in range(6)])
    for k in range(200):
        du = [math.sin((1.3 + 0.7 * i) * k + i) for i in range(3)]
        ds = [sum(r[j] * du[j] for j in range(3)) for r in truth]
        diag = f.update(du, ds)
    assert f.k == 200 and not diag["skipped"]
    err = max(abs(a - b) for ra, rb in zip(f.jacobian, truth) for a, b in zip(ra, rb))
    assert err < 1e-2, err

    assert rodservo.correction_factor(0, 0.95) == 1.0
    assert rodservo.compute_adaptive_factor(10.0) == rodservo.compute_adaptive_factor(-10.0)

    zeros = [0.0] * 3
    u, gain = rodservo.solve_command([0.0] * 6, [1.0] * 6, zeros, zeros, truth, truth)
    g = rodservo.gradient(u, [0.0] * 6, [1.0] * 6, zeros, zeros, truth, truth)
    assert max(abs(x) for x in g) < 1e-9 and len(gain) == 3
    assert rodservo.saturate([1.0, -1.0, 0.0], [0.1, 0.1, 0.1]) == [0.1, -0.1, 0.0]

    result = rodservo.simulate(config, model)
    summary = result.summary
    assert summary["converged"], summary
    assert summary["final_t1"] < 0.05 * summary["initial_t1"]
    assert len(result.records) == summary["steps_taken"] + 1
    errors = result.oracle_errors(model)
    assert len(errors) == summary["steps_taken"]

    with tempfile.TemporaryDirectory() as d:
        log = Path(d) / "run.csv"
        result.write(str(log), True)
        assert log.exists() and (Path(d) / "run.shapes.csv").exists()
        model.save(str(Path(d) / "model.txt"))
        assert rodservo.FeatureModel.load(str(Path(d) / "model.txt")).p == 6

    try:
        rodservo.RunConfig("akf.c00 = 1\n")
    except ValueError as e:
        assert "c00" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    print(
        f"ok: {summary['steps_taken']} steps, T1 {summary['initial_t1']:.3g} -> {summary['final_t1']:.3g}, "
        f"final oracle error {errors[-1][1]:.3f}"
    )


if __name__ == "__main__":
    main()
