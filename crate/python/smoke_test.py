"""Builds the extension with cargo, imports it and exercises each binding."""

import json
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def build() -> pathlib.Path:
    subprocess.run(["cargo", "build", "-p", "explgame-py"], cwd=ROOT, check=True)
    lib = ROOT / "target" / "debug" / "libexplgame.so"
    dest = pathlib.Path(tempfile.mkdtemp()) / "explgame.so"
    shutil.copy(lib, dest)
    return dest.parent


def main() -> None:
    sys.path.insert(0, str(build()))
    import explgame

    gbm = explgame.Gbm(0.05, 0.2, 1.0)
    path = gbm.simulate(2000, 1.0, 3)
    assert len(path) == 2001 and path[0] == 1.0
    fitted = explgame.fit([float(i) for i in range(len(path))], path)
    assert abs(fitted.sigma - 0.2) < 0.02, fitted
    assert gbm.transition_density(1.0, 1.1, 1.0) > 0.0

    cfg = explgame.Config()
    b1, b2 = explgame.roots(cfg)
    assert b1 > 1.0 and b2 < 0.0
    u_th, l_th = explgame.thresholds(cfg)
    assert abs(u_th - 0.0774) < 1e-4, u_th

    outcome = explgame.run_game(cfg)
    assert outcome.u_th == u_th
    assert len(outcome.pi) == 100
    report = json.loads(outcome.report_json())
    assert report["converged"] == outcome.converged

    cfg.set("sigma", 0.5)
    cfg.set("seed", 11)
    assert json.loads(cfg.to_json())["gbm"]["sigma"] == 0.5
    try:
        cfg.set("no_such_key", 1.0)
    except KeyError:
        pass
    else:
        raise AssertionError("unknown key accepted")

    envelope = explgame.Config.from_toml(str(ROOT / "configs" / "envelope_start.toml"))
    assert explgame.run_game(envelope).converged

    assert abs(explgame.update_belief(0.5, 0.5) - 1.0 / 1.25) < 1e-12
    tp, fn, tpr = explgame.evaluate_mia([0.1, 0.2, 0.9], [True, True, False], 0.15)
    assert (tp, fn, tpr) == (1, 1, 0.5)

    print(f"explgame {explgame.__version__}: {outcome!r}")
    print("smoke test passed")


if __name__ == "__main__":
    main()
