"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line."""

import itertools
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate, optimize
from scipy.stats import chisquare

from poolal.analysis import LearningCurve, aubc, build_comparison_matrix, paired_ttest, student_t_cdf
from poolal.data import DatasetTable, PoolState, RngStream, generate_gaussian_blobs
from poolal.datasets import DataSpec, blob_splits
from poolal.engine import ExperimentConfig, run_experiment
from poolal.learner import InferenceBundle, MlpModel, TrainConfig, cross_entropy, grad_embedding, loss_and_grads, train
from poolal.scenario import ScenarioSpec, apply_imbalance, apply_openset
from poolal.strategies import SelectionContext, StrategyParams, select
from poolal.strategies import scores as S
from poolal.strategies.selection import coverage_radius, select_badge, select_coreset

ROOT = Path(__file__).resolve().parents[1]


# ---------------------------------------------------------------- independent oracles


def _softmax_row(z):
    m = max(z)
    e = [math.exp(v - m) for v in z]
    s = sum(e)
    return [v / s for v in e]


def _h(p):
    return -sum(v * math.log(v) for v in p if v > 0)


def oracle_scores(name, probs, mc):
    """Per-sample loops over plain floats; mirrors the definitions, not the vectorised code."""
    out = []
    T = len(mc)
    for i, p in enumerate(probs):
        passes = [list(m[i]) for m in mc]
        agree = all(q == passes[0] for q in passes)
        mean = [sum(q[c] for q in passes) / T for c in range(len(p))]
        if name == "conf":
            s = 1 - max(p)
        elif name == "entropy":
            s = _h(p)
        elif name == "margin":
            a, b = sorted(p)[-2:]
            s = -(b - a)
        elif name == "varratio":
            votes = [max(range(len(q)), key=lambda c, q=q: (q[c], -c)) for q in passes]
            s = 1 - max(votes.count(c) for c in set(votes)) / T
        elif name == "bald":
            s = 0.0 if agree else max(_h(mean) - sum(_h(q) for q in passes) / T, 0.0)
        elif name == "meanstd":
            stds = [math.sqrt(sum((q[c] - mean[c]) ** 2 for q in passes) / T) for c in range(len(p))]
            s = 0.0 if agree else sum(stds) / len(stds)
        elif name == "coremse":
            s = 0.0 if agree else sum(sum((q[c] - mean[c]) ** 2 for c in range(len(p))) for q in passes) / T
        elif name == "corelog":
            kl = [
                sum(q[c] * (math.log(max(q[c], 1e-12)) - math.log(max(mean[c], 1e-12))) for c in range(len(p)))
                for q in passes
            ]
            s = 0.0 if agree else max(sum(kl) / T, 0.0)
        out.append(s)
    return out


def oracle_saal(model, X, rho, mode):
    """Explicit per-sample weight copies: gradient, normalised step, re-evaluate."""
    out = []
    for x in X:
        x = x[None]
        logits = model.forward(x)[1]
        y = np.array([int(np.argmax(logits))])
        base = float(cross_entropy(logits, y)[0])
        _, g = loss_and_grads(model, x, y)
        norm = math.sqrt(sum(float((v * v).sum()) for v in g.values()))
        if norm == 0:
            out.append(base if mode.startswith("Max") else 0.0)
            continue
        params = {k: v + rho * g[k] / norm for k, v in model.params().items()}
        pert = float(cross_entropy(model.with_params(params).forward(x)[1], y)[0])
        out.append(pert if mode.startswith("Max") else pert - base)
    return out


def oracle_noise(model, X, scale, draws, rng):
    gen = rng.generator()
    base = [_softmax_row(r) for r in model.forward(X)[1].tolist()]
    acc = [0.0] * len(X)
    for _ in range(draws):
        params = {}
        for name, p in model.params().items():
            rms = math.sqrt(float((p * p).mean()))
            params[name] = p + gen.standard_normal(p.shape) * scale * rms
        noisy = model.with_params(params).forward(X)[1].tolist()
        for i, r in enumerate(noisy):
            q = _softmax_row(r)
            acc[i] += math.sqrt(sum((a - b) ** 2 for a, b in zip(q, base[i])))
    return [a / draws for a in acc]


def sort_take(scores, unlabeled, k):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], int(unlabeled[i])))
    return {int(unlabeled[i]) for i in order[:k]}


def t_quad_cdf(t, df):
    logc = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    dens = lambda x: math.exp(logc - (df + 1) / 2 * math.log1p(x * x / df))  # noqa: E731
    val, _ = integrate.quad(dens, 0.0, abs(t), epsabs=1e-13, epsrel=1e-13, limit=200)
    return 0.5 + math.copysign(val, t)


# ---------------------------------------------------------------- criteria


SCORE_BASED = ("conf", "entropy", "margin", "varratio", "meanstd", "bald", "coremse", "corelog", "saal", "noise_stability")


def test_c01_oracle_equivalence(report):
    start = time.perf_counter()
    mismatches = []
    params = StrategyParams(noise_sampling=6, noise_scale=0.01, rho=0.05)
    for seed in range(4):
        ds = generate_gaussian_blobs(4, 60, 3, 0.6, RngStream(100 + seed))
        gen = np.random.default_rng(seed)
        lab = np.sort(gen.choice(len(ds), 40, replace=False))
        pool = PoolState(labeled=lab, unlabeled=np.setdiff1d(np.arange(len(ds)), lab))
        model = train(ds, lab, TrainConfig(epochs=20, hidden=16), RngStream(seed))
        unl = pool.unlabeled
        for name in SCORE_BASED:
            for k in (1, 13, 75, 200):
                ctx = SelectionContext(ds, pool, model, RngStream(seed, 5), TrainConfig(hidden=16), params)
                chosen = select(name, ctx, min(k, unl.size)).chosen
                X = ds.features[unl]
                if name == "saal":
                    ref = oracle_saal(model, X, params.rho, params.acq_mode)
                elif name == "noise_stability":
                    ref = oracle_noise(model, X, params.noise_scale, params.noise_sampling, ctx.rng.derive(2))
                else:
                    b = ctx.bundle
                    ref = oracle_scores(name, b.probs.tolist(), b.mc_probs.tolist())
                if set(chosen.tolist()) != sort_take(ref, unl, min(k, unl.size)):
                    mismatches.append((seed, name, k))
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 60
    report(1, ok, f"mismatches={mismatches} runtime={elapsed:.1f}s")
    assert ok


def test_c02_analytic_scores(report):
    errs = []
    for C in range(2, 21):
        b = InferenceBundle(np.arange(1), np.full((1, C), 1.0 / C), np.full((1, 1, C), 1.0 / C), np.ones((1, 1)), np.zeros((1, C)))
        errs.append(abs(S.score_entropy(b)[0] - math.log(C)))
    one_hot = np.eye(3)[[1]]
    mk = lambda p, mc: InferenceBundle(np.arange(1), np.asarray(p, float), np.asarray(mc, float), np.ones((1, 1)), np.zeros_like(np.asarray(p, float)))  # noqa: E731
    p = np.array([[0.2, 0.3, 0.5]])
    same = np.stack([p] * 4)
    ortho = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])
    checks = {
        "entropy uniform": max(errs) <= 1e-9,
        "entropy one-hot": S.score_entropy(mk(one_hot, one_hot[None]))[0] == 0.0,
        "margin tie": S.score_margin(mk([[0.5, 0.5]], [[[0.5, 0.5]]]))[0] == 0.0,
        "bald identical": S.score_bald(mk(p, same))[0] == 0.0,
        "meanstd identical": S.score_meanstd(mk(p, same))[0] == 0.0,
        "coremse orthogonal": abs(S.score_coremse(mk([[0.5, 0.5]], ortho))[0] - 0.5) <= 1e-9,
    }
    ok = all(checks.values())
    report(2, ok, " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items()))
    assert ok


def test_c03_kcenter_two_approx(report):
    start = time.perf_counter()
    gen = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        n_unl = int(gen.integers(2, 13))
        n_lab = int(gen.integers(0, 4))
        d = int(gen.integers(1, 4))
        emb = gen.normal(size=(n_lab + n_unl, d)) * gen.uniform(0.5, 3.0)
        lab = np.arange(n_lab)
        unl = np.arange(n_lab, n_lab + n_unl)
        k = int(gen.integers(1, n_unl + 1))
        picked = select_coreset(emb, lab, unl, k)
        greedy = coverage_radius(emb, np.r_[lab, picked], unl)
        best = min(coverage_radius(emb, np.r_[lab, list(c)], unl) for c in itertools.combinations(unl, k))
        ratio = greedy / best if best > 0 else (1.0 if greedy == 0 else math.inf)
        worst = max(worst, ratio)
    elapsed = time.perf_counter() - start
    ok = worst <= 2.0 + 1e-12 and elapsed < 60
    report(3, ok, f"worst greedy/optimal radius={worst:.3f} runtime={elapsed:.1f}s")
    assert ok


def test_c04_badge_seeding(report):
    gen = np.random.default_rng(0)
    g = np.vstack([gen.normal(scale=0.01, size=(1000, 2)), [[1000.0, 0.0]]])
    unl = np.arange(1001)
    hits = sum(int(select_badge(g, unl, 2, RngStream(4, i))[1] == 1000) for i in range(1000))
    counts = np.zeros(10)
    for i in range(2000):
        counts[select_badge(np.zeros((10, 5)), np.arange(10), 3, RngStream(5, i))] += 1
    p = chisquare(counts).pvalue
    ok = hits / 1000 >= 0.99 and p > 0.01
    report(4, ok, f"outlier-second frequency={hits / 1000:.3f} zero-gradient chi-square p={p:.3f}")
    assert ok


def test_c05_scenario_exactness(report):
    expected = [5000, 4181, 3497, 2924, 2445, 2045, 1710, 1430, 1196, 1000]
    ds = DatasetTable(np.zeros((50000, 1)), np.repeat(np.arange(10), 5000), 10)
    counts = apply_imbalance(ds, 0.2, RngStream(1)).class_counts().tolist()
    offsets = []
    id_ds = generate_gaussian_blobs(10, 100, 2, 0.25, RngStream(2))
    ood_src = generate_gaussian_blobs(10, 200, 2, 0.25, RngStream(3), offset=10.0)
    for rate in (0.2, 0.4, 0.6):
        for n_lab in (0, 37, 100):
            pool = PoolState(labeled=np.arange(n_lab), unlabeled=np.arange(n_lab, len(id_ds)))
            new_pool, merged = apply_openset(pool, id_ds, ood_src, rate, RngStream(4))
            unl = new_pool.unlabeled
            n_ood = int((merged.labels[unl] == -1).sum())
            offsets.append(abs(n_ood - rate * unl.size))
    ok = counts == expected and max(offsets) <= 1.0
    report(5, ok, f"imbalance counts={'exact' if counts == expected else counts} max OOD offset={max(offsets):.2f} samples")
    assert ok


def test_c06_statistics(report):
    gen = np.random.default_rng(6)
    t_err = 0.0
    for _ in range(200):
        a, b = gen.random(10), gen.random(10)
        d = [x - y for x, y in zip(a.tolist(), b.tolist())]
        m = sum(d) / 10
        s = math.sqrt(sum((x - m) ** 2 for x in d) / 9)
        ref = m / (s / math.sqrt(10))
        t_err = max(t_err, abs(paired_ttest(a, b).t - ref) / max(1.0, abs(ref)))
    cdf_err = max(abs(student_t_cdf(t, 9) - t_quad_cdf(t, 9)) for t in np.linspace(-8, 8, 81))
    crit = optimize.brentq(lambda t: student_t_cdf(t, 9) - 0.975, 1.0, 4.0, xtol=1e-12)
    inv_ok = True
    for trial in range(50):
        names = ["a", "b", "c", "d"]
        res = {s: {n: gen.random(10) * 0.3 + gen.random() * 0.5 for n in names} for s in range(int(gen.integers(1, 8)))}
        mat = build_comparison_matrix(res, names)
        inv_ok &= bool((np.diag(mat.wins) == 0).all())
        inv_ok &= bool(((mat.wins + mat.wins.T) <= len(res)).all())
        inv_ok &= bool((mat.totals == mat.wins.sum(axis=1)).all())
    ok = t_err <= 1e-12 and cdf_err <= 1e-8 and abs(crit - 2.262) <= 1e-3 and inv_ok
    report(6, ok, f"t err={t_err:.1e} cdf err={cdf_err:.1e} critical |t|={crit:.4f} matrix invariants={'ok' if inv_ok else 'FAIL'}")
    assert ok


def test_c07_aubc(report):
    flat_ok = all(aubc(LearningCurve([10, 20, 45, 90], [a] * 4)) == a for a in (0.0, 0.37, 0.5, 0.91, 1.0))
    hand = [
        (aubc(LearningCurve([100, 200], [0.5, 0.7])), 0.6),
        (aubc(LearningCurve([1, 2, 3], [0.2, 0.4, 0.6])), 0.4),
        (aubc(LearningCurve([0, 10, 40], [0.5, 0.6, 0.9])), 0.7),
    ]
    hand_err = max(abs(a - b) for a, b in hand)
    gen = np.random.default_rng(7)
    dom_ok = True
    for _ in range(1000):
        n = int(gen.integers(2, 11))
        b = np.cumsum(gen.integers(1, 100, n))
        lo = gen.random(n)
        hi = np.minimum(lo + gen.random(n) * 0.2, 1.0)
        dom_ok &= aubc(LearningCurve(b, hi)) >= aubc(LearningCurve(b, lo))
    ok = flat_ok and hand_err <= 1e-12 and dom_ok
    report(7, ok, f"flat exact={flat_ok} trapezoid err={hand_err:.1e} dominance={'ok' if dom_ok else 'FAIL'}")
    assert ok


def test_c08_gradient_check(report):
    worst = 0.0
    for seed in range(20):
        gen = np.random.default_rng(seed)
        d, H, C, n = (int(v) for v in gen.integers(2, 6, size=4))
        model = MlpModel.initialize(d, H + 2, C, 0.0, gen)
        model = model.with_params({k: v * 3 for k, v in model.params().items()})
        X = gen.normal(size=(n, d))
        y = gen.integers(0, C, n)
        _, grads = loss_and_grads(model, X, y)
        for name in ("W2", "b2"):
            p = model.params()[name]
            num = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                h = 1e-6
                plus, minus = p.copy(), p.copy()
                plus[idx] += h
                minus[idx] -= h
                lp = cross_entropy(model.with_params(dict(model.params(), **{name: plus})).forward(X)[1], y).mean()
                lm = cross_entropy(model.with_params(dict(model.params(), **{name: minus})).forward(X)[1], y).mean()
                num[idx] = (lp - lm) / (2 * h)
            worst = max(worst, float(np.abs(num - grads[name]).max() / max(np.abs(num).max(), 1e-12)))
        # per-sample gradient embedding equals the pseudo-label last-layer gradient
        h_emb, logits = model.forward(X)
        probs = np.exp(logits - logits.max(1, keepdims=True))
        probs /= probs.sum(1, keepdims=True)
        bundle = InferenceBundle(np.arange(n), probs, probs[None], h_emb, logits)
        ge = grad_embedding(model, bundle)
        for i in range(n):
            _, g1 = loss_and_grads(model, X[i : i + 1], np.array([int(np.argmax(logits[i]))]))
            worst = max(worst, float(np.abs(ge[i] - g1["W2"].T.ravel()).max() / max(np.abs(ge[i]).max(), 1e-12)))
    ok = worst <= 1e-4
    report(8, ok, f"worst relative error={worst:.2e} over 20 models")
    assert ok


def _blob_experiment(strategy, scenario=ScenarioSpec(), ood=False, trials=10):
    spec = DataSpec(n_class=4, samples_per_class=500, test_per_class=250, dim=2, spread=0.25)
    train_set, test_set, ood_set = blob_splits(spec, 0, 0.6 if ood else 0.0)
    cfg = ExperimentConfig(strategy=strategy, trials=trials, cycles=10, n_initial=20, n_query=20, scenario=scenario, data=spec)
    return run_experiment(cfg, train_set, test_set, ood_set)


@pytest.mark.slow
def test_c09_directional(report):
    start = time.perf_counter()
    res = {name: _blob_experiment(name) for name in ("random", "entropy", "margin")}
    elapsed = time.perf_counter() - start
    means = {k: v.mean_final_accuracy for k, v in res.items()}
    lowest = min(t.records[-1].accuracy for v in res.values() for t in v.trials)
    ok = (
        means["entropy"] >= means["random"] - 0.01
        and means["margin"] >= means["random"] - 0.01
        and lowest >= 0.85
        and elapsed < 600
    )
    detail = " ".join(f"{k}={v:.4f}" for k, v in means.items())
    report(9, ok, f"mean final acc {detail}; min final acc={lowest:.4f} runtime={elapsed:.0f}s")
    assert ok


def _ood_fraction(result):
    fr = []
    for t in result.trials:
        q = sum(r.n_queried for r in t.records[1:])
        fr.append(sum(r.n_ood_queried for r in t.records[1:]) / q)
    return float(np.mean(fr))


@pytest.mark.slow
def test_c10_openset(report):
    sc = ScenarioSpec("openset", ood_rate=0.6, ood_source="blobs-ood")
    rnd = _ood_fraction(_blob_experiment("random", sc, ood=True))
    lfo = _ood_fraction(_blob_experiment("lfosa", sc, ood=True))
    ok = lfo < rnd
    report(10, ok, f"cumulative OOD fraction over cycles 2-10: lfosa={lfo:.3f} random={rnd:.3f}")
    assert ok


@pytest.mark.slow
def test_c11_selection_time(report):
    C, D, per = 10, 16, 510
    ds = generate_gaussian_blobs(C, per, D, 0.5, RngStream(11))
    gen = np.random.default_rng(11)
    lab = np.sort(gen.choice(len(ds), 100, replace=False))
    unl = np.setdiff1d(np.arange(len(ds)), lab)
    pool = PoolState(labeled=lab, unlabeled=unl)
    model = train(ds, lab, TrainConfig(epochs=30), RngStream(12))
    times = {}
    for name, reps in (("entropy", 3), ("coreset", 3), ("badge", 2)):
        best = math.inf
        for r in range(reps):
            ctx = SelectionContext(ds, pool, model, RngStream(13, r))
            best = min(best, select(name, ctx, 500).elapsed_seconds)
        times[name] = best
    ok = times["badge"] >= 2 * times["coreset"] and times["coreset"] >= 2 * times["entropy"]
    report(
        11,
        ok,
        f"|U|={unl.size} k=500 badge={times['badge']:.3f}s coreset={times['coreset']:.3f}s entropy={times['entropy']:.3f}s",
    )
    assert ok


def _cli(out_dir, extra):
    argv = [
        sys.executable, "-m", "poolal", "run", "--n-query", "10", "--n-initial", "10", "--cycle", "10", "--trial", "2",
        "--epochs", "40", "--samples-per-class", "60", "--test-per-class", "30", "--out-dir", str(out_dir),
    ] + extra
    env = dict(os.environ, PYTHONHASHSEED="random")
    out = subprocess.run(argv, capture_output=True, text=True, env=env, cwd=ROOT)
    assert out.returncode == 0, out.stderr
    return Path(out.stdout.strip().splitlines()[-1])


@pytest.mark.slow
def test_c12_determinism(report, tmp_path):
    runs = [
        ["--method", "entropy"],
        ["--method", "badge", "--imb-factor", "0.5"],
        ["--method", "lfosa", "--openset", "--ood-rate", "0.4"],
        ["--method", "noise_stability", "--noise_sampling", "5"],
    ]
    same = []
    for i, extra in enumerate(runs):
        a = _cli(tmp_path / f"a{i}", extra + ["--no-timing"])
        b = _cli(tmp_path / f"b{i}", extra + ["--no-timing"])
        same.append((a / "cycles.csv").read_bytes() == (b / "cycles.csv").read_bytes())
    # with timing on, everything except the sel_seconds column still matches
    a = _cli(tmp_path / "ta", runs[0])
    b = _cli(tmp_path / "tb", runs[0])
    strip = lambda p: [r.split(",")[:7] + r.split(",")[8:] for r in p.read_text().splitlines()]  # noqa: E731
    timed_same = strip(a / "cycles.csv") == strip(b / "cycles.csv")
    ok = all(same) and timed_same
    report(12, ok, f"bitwise-identical cycles.csv (timing frozen) {sum(same)}/{len(same)}; non-timing columns with timing on: {timed_same}")
    assert ok
