"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines as
they are produced; they are repeated in the terminal summary either way.
"""

import csv
import json
import time

import numpy as np
import pytest
import yaml
from sklearn.linear_model import LogisticRegression

from conftest import ROOT
from oracles import naive_dcor, rel_err
from vflguard import autodiff as ad
from vflguard.autodiff import Tape, finite_difference_gradient
from vflguard.cli import main
from vflguard.config import load_config
from vflguard.dcor import dcor, log_dcor_loss
from vflguard.defenses import ar_loss, nr_loss
from vflguard.evaluation import eval_auc
from vflguard.grl import grl
from vflguard.nn import Mlp, bce_with_logits, mse_loss
from vflguard.protocol import (BackwardMsg, Experiment, ForwardMsg, PassiveParty, ProtocolError, SessionClose,
                               SessionHello, decode_msg, encode_msg, narrowed)
from vflguard.protocol.session import build_dataset

CONFIGS = ROOT / "configs"
FD_H = 1e-5
FD_TOL = 1e-4
INSTANCES = 100


# ---------------------------------------------------------------------------
# 1. gradient integrity


def _away_from_zero(rng, shape, lo=0.05):
    v = rng.uniform(lo, 2.0, size=shape)
    return v * rng.choice([-1.0, 1.0], size=shape)


def _primitive_cases():
    """name -> builder(rng) returning (inputs, fn(nodes) -> Node)."""

    def shape(rng):
        return int(rng.integers(1, 5)), int(rng.integers(1, 5))

    def unary(op, sample):
        def build(rng):
            return [sample(rng, shape(rng))], lambda xs: op(xs[0])
        return build

    def binary(op):
        def build(rng):
            s = shape(rng)
            return [rng.normal(size=s), rng.normal(size=s)], lambda xs: op(xs[0], xs[1])
        return build

    def matmul(rng):
        n, k, m = (int(v) for v in rng.integers(1, 5, size=3))
        return [rng.normal(size=(n, k)), rng.normal(size=(k, m))], lambda xs: ad.matmul(xs[0], xs[1])

    def reduce(op):
        def build(rng):
            axis = [None, 0, 1][int(rng.integers(0, 3))]
            return [rng.normal(size=shape(rng))], lambda xs: op(xs[0], axis=axis)
        return build

    def broadcast(rng):
        n, m = shape(rng)
        return [rng.normal(size=(m,))], lambda xs: ad.broadcast(xs[0], (n, m))

    def concat(rng):
        n = int(rng.integers(1, 5))
        a, b = rng.normal(size=(n, int(rng.integers(1, 4)))), rng.normal(size=(n, int(rng.integers(1, 4))))
        return [a, b], lambda xs: ad.concat([xs[0], xs[1]], axis=1)

    def slice_(rng):
        n, m = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        i, j = int(rng.integers(0, n - 1)), int(rng.integers(0, m))
        return [rng.normal(size=(n, m))], lambda xs: ad.slice_(xs[0], (slice(i, None), j))

    return {
        "add": binary(ad.add),
        "sub": binary(ad.sub),
        "mul": binary(ad.mul),
        "matmul": matmul,
        "relu": unary(ad.relu, _away_from_zero),
        "sigmoid": unary(ad.sigmoid, lambda rng, s: rng.normal(scale=3.0, size=s)),
        "sqrt": unary(ad.sqrt, lambda rng, s: rng.uniform(0.2, 4.0, size=s)),
        "log": unary(ad.log, lambda rng, s: rng.uniform(0.2, 4.0, size=s)),
        "exp": unary(ad.exp, lambda rng, s: rng.normal(size=s)),
        "sum": reduce(ad.sum_),
        "mean": reduce(ad.mean),
        "broadcast": broadcast,
        "transpose": unary(ad.transpose, lambda rng, s: rng.normal(size=s)),
        "concat": concat,
        "slice": slice_,
    }


def _check_fd(inputs, fn, rng):
    """Contract the output with a fixed random weight and compare every input's gradient."""
    tape = Tape()
    nodes = [tape.variable(f"x{i}", v, requires_grad=True) for i, v in enumerate(inputs)]
    out = fn(nodes)
    w = rng.normal(size=out.value.shape)
    grads = tape.backward(root=ad.sum_(out * tape.constant(w)))
    worst = 0.0
    for i, v in enumerate(inputs):
        def scalar(z, i=i):
            t = Tape()
            args = [t.constant(z if k == i else inputs[k]) for k in range(len(inputs))]
            return float(np.sum(fn(args).value * w))

        worst = max(worst, rel_err(grads[f"x{i}"], finite_difference_gradient(scalar, v, h=FD_H)))
    return worst


def _loss_cases():
    def small_nets(rng):
        F_out, d = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        R = Mlp.build([F_out, 6, d], rng, name="R")
        return R, rng.normal(size=(int(rng.integers(3, 7)), F_out)), d

    def ar(rng):
        R, fx, d = small_nets(rng)
        x = rng.normal(size=(fx.shape[0], d))
        lam = float(rng.uniform(0.1, 2.0))
        # the F side of ar_loss sees -lam times the plain gradient
        return fx, (lambda t, e: ar_loss(R, e, x, lam)), (lambda e: -lam * _mse_of(R, e, x)), R, x

    def nr(rng):
        R, fx, d = small_nets(rng)
        noise = rng.normal(size=(fx.shape[0], d))
        return fx, (lambda t, e: nr_loss(R, e, noise)), (lambda e: _mse_of(R, e, noise)), R, noise

    return {"ar_loss": ar, "nr_loss": nr}


def _mse_of(R, emb, target):
    t = Tape()
    return float(mse_loss(R.on_tape(t, t.constant(emb)), target).value)


def test_criterion_1_gradient_integrity(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {}
    for name, build in _primitive_cases().items():
        worst[name] = max(_check_fd(*build(rng), rng) for _ in range(INSTANCES))

    for name, build in _loss_cases().items():
        errs = []
        for _ in range(INSTANCES):
            fx0, on_tape, value, R, target = build(rng)
            tape = Tape()
            fx = tape.variable("fx", fx0, requires_grad=True)
            g = tape.backward(root=on_tape(tape, fx))
            errs.append(rel_err(g["fx"], finite_difference_gradient(value, fx0, h=FD_H)))
            if name == "ar_loss":
                # the reconstructor side descends the plain loss
                w = R.layers[0].weight
                w0 = w.copy()

                def of_w(v):
                    w[...] = v
                    try:
                        return _mse_of(R, fx0, target)
                    finally:
                        w[...] = w0

                errs.append(rel_err(g["R.0.weight"], finite_difference_gradient(of_w, w0, h=FD_H)))
        worst[name] = max(errs)

    errs = []
    for _ in range(INSTANCES):
        n = int(rng.integers(1, 12))
        logits = rng.normal(scale=3.0, size=n)
        y = (rng.random(n) < 0.5).astype(float)
        tape = Tape()
        node = tape.variable("l", logits, requires_grad=True)
        g = tape.backward(root=bce_with_logits(node, y))["l"]
        fd = finite_difference_gradient(lambda v: float(bce_with_logits(Tape().constant(v), y).value), logits, h=FD_H)
        errs.append(rel_err(g, fd))
    worst["bce_with_logits"] = max(errs)

    errs = []
    for _ in range(INSTANCES):
        n = int(rng.integers(4, 13))
        x = rng.normal(size=(n, int(rng.integers(1, 5))))
        y0 = rng.normal(size=(n, int(rng.integers(1, 5))))
        tape = Tape()
        y = tape.variable("y", y0, requires_grad=True)
        g = tape.backward(root=log_dcor_loss(x, y)[0])["y"]
        fd = finite_difference_gradient(lambda v: float(log_dcor_loss(x, Tape().constant(v))[0].value), y0, h=FD_H)
        errs.append(rel_err(g, fd))
    worst["log_dcor_loss"] = max(errs)

    elapsed = time.perf_counter() - start
    bad = {k: v for k, v in worst.items() if not v < FD_TOL}
    ok = not bad and elapsed < 60.0 and len(worst) == 19
    criterion("1", ok, f"{len(worst)} functions x {INSTANCES} instances, worst rel err "
                       f"{max(worst.values()):.2e} ({max(worst, key=worst.get)}), {elapsed:.1f}s"
                       + (f", over tolerance: {sorted(bad)}" if bad else ""))
    assert ok


# ---------------------------------------------------------------------------
# 2. GRL contract


def test_criterion_2_grl_contract(criterion):
    rng = np.random.default_rng(7)
    worst_f, r_identical = 0.0, True
    for _ in range(50):
        d, k = int(rng.integers(2, 8)), int(rng.integers(1, 6))
        F = Mlp.build([d, 10, k], rng, name="F")
        R = Mlp.build([k, 10, d], rng, name="R")
        x = rng.normal(size=(int(rng.integers(2, 20)), d))

        def grads(reverse):
            tape = Tape()
            fx = F.on_tape(tape, tape.constant(x))
            if reverse:
                return tape.backward(root=ar_loss(R, fx, x, lam=1.0))
            return tape.backward(root=mse_loss(R.on_tape(tape, fx), x))

        with_grl, plain = grads(True), grads(False)
        for name in F.params():
            scale = max(1.0, float(np.abs(plain[name]).max()))
            worst_f = max(worst_f, float(np.abs(with_grl[name] + plain[name]).max()) / scale)
        r_identical &= all(np.abs(with_grl[n] - plain[n]).max() <= 1e-12 for n in R.params())
    ok = worst_f <= 1e-12 and r_identical
    criterion("2", ok, f"F grads negated to {worst_f:.1e}, R grads identical: {r_identical} (50 instances)")
    assert ok


def test_grl_node_is_pure_sign_flip():
    tape = Tape()
    x = tape.variable("x", np.random.default_rng(0).normal(size=(3, 2)), requires_grad=True)
    g = tape.backward(root=ad.sum_(grl(x, 1.0) * np.arange(6.0).reshape(3, 2)))
    np.testing.assert_array_equal(g["x"], -np.arange(6.0).reshape(3, 2))


# ---------------------------------------------------------------------------
# 3. NR blocking


def test_criterion_3_nr_blocking(criterion):
    cfg = load_config(CONFIGS / "vanilla.yaml").replace(**{
        "defense.alpha_n": 0.01, "training.n_batches": 1000, "training.eval_every": 1000})
    exp = Experiment(cfg)
    R0 = {k: v.tobytes() for k, v in exp.models.R.params().items()}
    F0 = {k: v.copy() for k, v in exp.models.F.params().items()}
    records = list(exp.run())
    same_r = {k: v.tobytes() for k, v in exp.models.R.params().items()} == R0
    f_moved = any(not np.array_equal(F0[k], v) for k, v in exp.models.F.params().items())
    nr_active = records[-1].l_n > 0
    ok = same_r and f_moved and nr_active
    criterion("3", ok, f"1000 batches at alpha_n=0.01: R bit-identical {same_r}, F updated {f_moved}, "
                       f"mean L_n {records[-1].l_n:.4f}")
    assert ok


# ---------------------------------------------------------------------------
# 4. dCor oracle and invariances


def test_criterion_4_dcor_oracle(criterion):
    rng = np.random.default_rng(11)
    worst = {"oracle": 0.0, "self": 0.0, "symmetry": 0.0, "translation": 0.0, "scale": 0.0, "rotation": 0.0}
    for _ in range(200):
        n = int(rng.integers(2, 9))
        x = rng.normal(size=(n, int(rng.integers(1, 5))))
        y = rng.normal(size=(n, int(rng.integers(1, 5))))
        base = dcor(x, y).dcor
        q, r = np.linalg.qr(rng.normal(size=(x.shape[1], x.shape[1])))
        q = q * np.sign(np.diag(r))
        worst["oracle"] = max(worst["oracle"], abs(base - naive_dcor(x, y)))
        worst["self"] = max(worst["self"], abs(dcor(x, x).dcor - 1.0))
        worst["symmetry"] = max(worst["symmetry"], abs(dcor(y, x).dcor - base))
        worst["translation"] = max(worst["translation"], abs(dcor(x + rng.normal(scale=10, size=x.shape[1]), y).dcor - base))
        worst["scale"] = max(worst["scale"], abs(dcor(x, float(rng.uniform(0.01, 100)) * y).dcor - base))
        worst["rotation"] = max(worst["rotation"], abs(dcor(x @ q, y).dcor - base))
    ok = worst["oracle"] <= 1e-10 and all(v <= 1e-9 for k, v in worst.items() if k != "oracle")
    criterion("4", ok, "200 instances n<=8, max deviations " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


# ---------------------------------------------------------------------------
# 5. batch-size study


def test_criterion_5_dcor_batch_study(criterion, tmp_path):
    start = time.perf_counter()
    code = main(["dcor-batch-study", "--config", str(CONFIGS / "dcor_study.yaml"), "--out", str(tmp_path)])
    elapsed = time.perf_counter() - start
    with open(tmp_path / "dcor_batch_study.csv") as fh:
        rows = list(csv.DictReader(fh))
    ns = [int(r["n"]) for r in rows]
    medians = [float(r["median"]) for r in rows]
    decreasing = all(a > b for a, b in zip(medians, medians[1:]))
    ok = code == 0 and ns == [16, 64, 256, 1024] and {r["trials"] for r in rows} == {"20"} \
        and decreasing and elapsed < 120.0
    criterion("5", ok, "medians " + ", ".join(f"n={n}: {m:.3f}" for n, m in zip(ns, medians)) + f", {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------------------
# 6. trend reproduction


def _sweep(tmp, name, config, grid=None):
    """Run a sweep through the CLI; returns {cell settings: metrics records}."""
    raw = yaml.safe_load((CONFIGS / config).read_text())
    if grid is not None:
        raw["sweep"] = {"grid": grid}
    path = tmp / f"{name}.yaml"
    path.write_text(yaml.safe_dump(raw))
    out = tmp / name
    # eval only at start and end: evaluation draws from its own seeds, so cadence leaves training untouched
    assert main(["sweep", "--config", str(path), "--out", str(out)]) == 0
    with open(out / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        assert row["status"] == "ok", row["error"]
        row["records"] = [json.loads(s) for s in (out / row["cell"] / "metrics.jsonl").read_text().splitlines()]
    return rows


@pytest.fixture(scope="module")
def trends(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("trends")
    seeds = {"seed": [0, 1, 2]}
    start = time.perf_counter()
    nr = _sweep(tmp, "nr", "nr_sweep.yaml")
    noise = _sweep(tmp, "noise", "noise_sweep.yaml")
    dcor_rows = _sweep(tmp, "dcor", "dcor.yaml", {**seeds, "training.eval_every": [5000]})
    dravl = _sweep(tmp, "dravl", "dravl.yaml", {**seeds, "training.eval_every": [5000]})
    elapsed = time.perf_counter() - start

    def by(rows, key, value):
        out = [r for r in rows if float(r[key]) == value]
        assert sorted(int(r["seed"]) for r in out) == [0, 1, 2]
        return sorted(out, key=lambda r: int(r["seed"]))

    vanilla = by(nr, "defense.alpha_n", 0.0)
    return {
        "elapsed": elapsed,
        "vanilla": vanilla,
        "nr": {a: by(nr, "defense.alpha_n", a) for a in (0.0, 0.001, 0.01)},
        "noise": {s: by(noise, "defense.baseline_noise_std", s) for s in (0.0, 1.5, 5.0, 12.5, 25.0)},
        "dcor": sorted(dcor_rows, key=lambda r: int(r["seed"])),
        "dravl": sorted(dravl, key=lambda r: int(r["seed"])),
    }


def _final(rows, key):
    return np.array([r["records"][-1][key] for r in rows])


def _mean(rows, key):
    return float(_final(rows, key).mean())


@pytest.mark.slow
def test_criterion_6_runtime_and_setup(criterion, trends):
    runs = 9 + 15 + 3 + 3
    steps = {r["records"][-1]["step"] for group in ("vanilla", "dcor", "dravl") for r in trends[group]}
    ok = trends["elapsed"] < 600.0 and steps == {5000}
    criterion("6", ok, f"{runs} runs of 5000 batches over seeds 0-2 in {trends['elapsed']:.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_6a_vanilla_reduces_dcor(criterion, trends):
    start = np.array([r["records"][0]["dcor_x_fx"] for r in trends["vanilla"]])
    end = _final(trends["vanilla"], "dcor_x_fx")
    ok = bool(np.all(end < start))
    criterion("6a", ok, "vanilla dcor start -> end per seed: "
              + ", ".join(f"{a:.3f} -> {b:.3f}" for a, b in zip(start, end)))
    assert ok


@pytest.mark.slow
def test_criterion_6b_dcor_module(criterion, trends):
    v_dcor, d_dcor = _mean(trends["vanilla"], "dcor_x_fx"), _mean(trends["dcor"], "dcor_x_fx")
    v_auc, d_auc = _mean(trends["vanilla"], "auc"), _mean(trends["dcor"], "auc")
    ok = d_dcor < v_dcor and v_auc - d_auc < 0.05
    criterion("6b", ok, f"alpha_d=0.1 dcor {d_dcor:.3f} vs vanilla {v_dcor:.3f}; "
                        f"AUC {d_auc:.4f} vs {v_auc:.4f} (drop {v_auc - d_auc:+.4f})")
    assert ok


@pytest.mark.slow
def test_criterion_6c_nr_sweep(criterion, trends):
    alphas = (0.0, 0.001, 0.01)
    mse = [_mean(trends["nr"][a], "attacker_mse") for a in alphas]
    auc = [_mean(trends["nr"][a], "auc") for a in alphas]
    mse_ok = all(a <= b for a, b in zip(mse, mse[1:]))
    auc_ok = all(a >= b for a, b in zip(auc, auc[1:]))
    ok = mse_ok and auc_ok
    criterion("6c", ok, "alpha_n 0 / 0.001 / 0.01: mean MSE " + " / ".join(f"{m:.4f}" for m in mse)
              + f" (non-decreasing {mse_ok}); mean AUC " + " / ".join(f"{a:.4f}" for a in auc)
              + f" (non-increasing {auc_ok})")
    assert ok


@pytest.mark.slow
def test_criterion_6d_dravl(criterion, trends):
    v_mse, d_mse = _mean(trends["vanilla"], "attacker_mse"), _mean(trends["dravl"], "attacker_mse")
    v_dcor, d_dcor = _mean(trends["vanilla"], "dcor_x_fx"), _mean(trends["dravl"], "dcor_x_fx")
    ok = d_mse > v_mse and d_dcor < v_dcor
    criterion("6d", ok, f"DRAVL MSE {d_mse:.4f} vs vanilla {v_mse:.4f}; dcor {d_dcor:.3f} vs {v_dcor:.3f}")
    assert ok


@pytest.mark.slow
def test_criterion_6e_noise_baseline(criterion, trends):
    aucs = {s: _mean(rows, "auc") for s, rows in trends["noise"].items()}
    top = aucs[max(aucs)]
    ok = 0.45 <= top <= 0.55
    criterion("6e", ok, "mean AUC by noise std: " + ", ".join(f"{s:g}: {a:.4f}" for s, a in aucs.items()))
    assert ok


@pytest.mark.slow
def test_zero_noise_cells_match_vanilla(trends):
    for a, b in zip(trends["noise"][0.0], trends["vanilla"]):
        assert a["records"] == b["records"]


# ---------------------------------------------------------------------------
# 7. protocol


def _small_run_cfg(**over):
    cfg = load_config(CONFIGS / "dravl.yaml").replace(**{
        "data.synthetic.n_samples": 2000, "training.n_batches": 60, "training.eval_every": 30,
        "attack.epochs": 1, **over})
    return cfg


def _random_message(rng):
    kind = int(rng.integers(0, 4))
    if kind == 2:
        return SessionHello(int(rng.integers(1, 2 ** 32)), int(rng.integers(0, 2 ** 16)))
    if kind == 3:
        return SessionClose()
    rows, cols = int(rng.integers(1, 9)), int(rng.integers(1, 9))
    vals = rng.normal(scale=10.0 ** rng.integers(-3, 4), size=(rows, cols))
    bid = int(rng.integers(0, 2 ** 63)) * 2 + int(rng.integers(0, 2))
    if kind == 0:
        return ForwardMsg(bid, vals)
    return BackwardMsg(bid, vals, float(rng.normal()))


def _lockstep_state_machine(rng, steps=2000):
    """Drive a passive party with random legal and illegal calls against a reference model."""
    F = Mlp.build([3, 2], rng, name="extractor")
    party = PassiveParty(F)
    expected_next, in_flight, violations = 0, None, 0
    for _ in range(steps):
        op = int(rng.integers(0, 4))
        x = rng.normal(size=(4, 3))
        if op == 0:  # forward
            if in_flight is None:
                msg = party.forward(x)
                if msg.batch_id != expected_next:
                    return False, violations
                in_flight = msg.batch_id
            else:
                with pytest.raises(ProtocolError):
                    party.forward(x)
                violations += 1
        else:  # backward: right id, stale id, or future id
            bid = (in_flight if in_flight is not None else expected_next) + (0, -1, 1)[op - 1]
            legal = in_flight is not None and bid == in_flight
            if legal:
                party.backward(BackwardMsg(bid, np.zeros((4, 2)), 0.0))
                in_flight, expected_next = None, expected_next + 1
            else:
                with pytest.raises(ProtocolError):
                    party.backward(BackwardMsg(max(bid, 0), np.zeros((4, 2)), 0.0))
                violations += 1
    return True, violations


def test_criterion_7_protocol(criterion):
    cfg = _small_run_cfg()
    socket = [r.to_dict() for r in Experiment(cfg.replace(**{"training.transport": "socket"})).run()]
    narrowed_inproc = [r.to_dict() for r in Experiment(cfg, narrow_inprocess=True).run()]
    wide_inproc = [r.to_dict() for r in Experiment(cfg).run()]
    identical = socket == narrowed_inproc
    keys = ("attacker_mse", "dcor_x_fx", "auc", "l_c")
    drift = max(abs(a[k] - b[k]) for a, b in zip(socket, wide_inproc) for k in keys)

    rng = np.random.default_rng(99)
    round_trips = 0
    for _ in range(1000):
        msg = _random_message(rng)
        frame = encode_msg(msg)
        back = decode_msg(frame)
        if back == narrowed(msg) and encode_msg(back) == frame:
            round_trips += 1

    lockstep_ok, violations = _lockstep_state_machine(np.random.default_rng(5))
    ok = identical and drift < 1e-3 and round_trips == 1000 and lockstep_ok and violations > 0
    criterion("7", ok, f"socket vs narrowed in-process identical: {identical} ({len(socket)} records), "
                       f"max drift vs f64 in-process {drift:.1e}; codec {round_trips}/1000 bit-exact; "
                       f"lockstep model held, {violations} illegal calls rejected")
    assert ok


# ---------------------------------------------------------------------------
# 8. utility sanity


def test_criterion_8_separable(criterion):
    cfg = load_config(CONFIGS / "separable.yaml")
    data = build_dataset(cfg)
    xtr, _, ytr = data.split("train")
    xev, _, yev = data.split("eval")
    oracle = eval_auc(LogisticRegression(max_iter=2000).fit(xtr, ytr).decision_function(xev), yev)
    records = list(Experiment(cfg, data).run())
    best_within = max(r.auc for r in records if r.step <= 2000)
    ok = oracle > 0.95 and best_within > 0.95 and cfg.training.n_batches <= 2000
    criterion("8", ok, f"vanilla eval AUC {best_within:.4f} within {cfg.training.n_batches} batches "
                       f"(logistic oracle {oracle:.4f})")
    assert ok


# ---------------------------------------------------------------------------
# 9. determinism


def test_criterion_9_determinism(criterion, tmp_path):
    cfg = load_config(CONFIGS / "dravl.yaml")
    raw = cfg.to_dict()
    raw["training"].update(n_batches=300, eval_every=100)
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(raw))
    for d in ("a", "b"):
        assert main(["train", "--config", str(path), "--out", str(tmp_path / d), "--seed", "17"]) == 0
    same = {name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            for name in ("metrics.jsonl", "metrics.csv")}
    ok = all(same.values()) and len((tmp_path / "a" / "metrics.jsonl").read_text().splitlines()) == 4
    criterion("9", ok, "two seeded train runs: " + ", ".join(f"{k} identical {v}" for k, v in same.items()))
    assert ok
