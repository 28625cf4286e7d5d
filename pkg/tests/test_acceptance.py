"""Acceptance gate: one test per criterion, one printed line per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines live.
Every tolerance is fixed here; nothing is calibrated at runtime.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from zeal import aggregate, audit, codec, compressmeter, fpbits, planner
from zeal.mechanism import (
    derive_params,
    perturb_array,
    perturb_dataset,
    uniform_stream,
    variance_array,
)

HUMIDITY = dict(feasible=(23.5, 83.9), n=5000)   # center 53.7, half-range 30.2
TAXI = dict(feasible=(1.0, 120.0), n=1000)       # center 60.5, half-range 59.5


def _criterion(num: int, name: str, ok: bool, detail: str = ""):
    line = f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'} {name}"
    if detail:
        line += f" :: {detail}"
    print(line)
    assert ok, line


def _profile_params(profile, epsilon=1.0):
    lo, hi = profile["feasible"]
    center, half = (lo + hi) / 2.0, (hi - lo) / 2.0
    return derive_params(epsilon, center, half)


def _profile_data(profile, seed):
    lo, hi = profile["feasible"]
    return uniform_stream(seed, stream=0x5EED).uniform(lo, hi, profile["n"])


# -----------------------------------------------------------------------------
# 1. Moment reproduction: MC mean within 4 analytic SE, MC variance within 5%.
# -----------------------------------------------------------------------------

def test_c01_moment_reproduction():
    start = time.perf_counter()
    cases = []
    base = derive_params(1.0, 10.0, 5.0)
    cases.append((base, 10.0))
    cases.append((planner.plan(base, target_exponent=6).params(), 12.5))
    cases.append((derive_params(0.5, 53.7, 30.2), 40.0))
    fig4 = derive_params(3.0, 1000.0, 100.0)
    cases.append((planner.plan(fig4).params(), 950.0))
    cases.append((derive_params(2.0, 60.5, 59.5), 100.0))

    n = 10 ** 5
    details = []
    ok = True
    for i, (params, x) in enumerate(cases):
        u = uniform_stream(1000 + i).random(n)
        draws = perturb_array(params, np.full(n, x), u)
        var = float(variance_array(params, np.array([x]))[0])
        se = math.sqrt(var / n)
        mean_err = abs(aggregate.exact_mean(draws.tolist()) - (x + params.bias))
        mc_var = float(np.var(draws - params.bias))
        var_rel = abs(mc_var - var) / var
        ok &= mean_err <= 4 * se and var_rel <= 0.05
        details.append(f"set{i}: |dmean|={mean_err:.3g}<={4 * se:.3g},"
                       f" dvar={var_rel:.2%}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 10.0
    _criterion(1, "moment reproduction (5 parameter sets, 1e5 samples)",
               ok, "; ".join(details) + f"; {elapsed:.1f}s<10s")


# -----------------------------------------------------------------------------
# 2. Two-level density ratio holds exactly on a 20 x 200 grid.
# -----------------------------------------------------------------------------

def test_c02_ldp_density_ratio():
    from zeal.mechanism import pdf
    start = time.perf_counter()
    params = derive_params(1.0, 10.0, 5.0)
    xs = np.linspace(params.domain_min, params.domain_max, 20)
    vs = np.linspace(params.out_min - 0.5, params.out_max + 0.5, 200)
    levels = np.array([[pdf(params, float(x), float(v)) for v in vs] for x in xs])
    # pdf(x_i, v) <= e^eps * pdf(x_j, v) for all pairs, exactly
    scaled = params.exp_eps * levels  # same double multiplication the check uses
    ok = True
    for i in range(len(xs)):
        for j in range(len(xs)):
            if not np.all(levels[i] <= scaled[j]):
                ok = False
    distinct = set(levels.reshape(-1).tolist())
    ok &= distinct == {0.0, params.p_flank, params.p}
    elapsed = time.perf_counter() - start
    ok &= elapsed < 1.0
    _criterion(2, "privacy density ratio exact on 20x200 grid", ok,
               f"levels={sorted(distinct)}; {elapsed:.2f}s<1s")


# -----------------------------------------------------------------------------
# 3. Bernstein bound validity on humidity-range synthetic data.
# -----------------------------------------------------------------------------

def test_c03_bernstein_bound_validity():
    start = time.perf_counter()
    params = _profile_params(HUMIDITY)
    data = _profile_data(HUMIDITY, seed=30)
    trials = 200
    spread = params.half_span + params.half_range
    grid = list(aggregate.default_lambda_grid(params, 30))
    beyond = [spread * 1.001, spread * 1.5]
    rows = aggregate.empirical_bound_check(params, data, grid + beyond,
                                           trials=trials, seed=31)
    ok = True
    worst = 0.0
    for row in rows[:30]:
        sigma = math.sqrt(max(row.bound_abs * (1 - row.bound_abs), 0.0) / trials)
        slack = row.empirical_p - (row.bound_abs + 3 * sigma)
        worst = max(worst, slack)
        ok &= slack <= 0.0
    zero_beyond = all(row.empirical_p == 0.0 for row in rows[30:])
    ok &= zero_beyond
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60.0
    _criterion(3, "empirical exceedance never beats the bound", ok,
               f"worst slack={worst:.3g}; zero beyond support={zero_beyond}; "
               f"{elapsed:.1f}s<60s")


# -----------------------------------------------------------------------------
# 4. Utility at reference scale: median |relative error| over 100 trials <= 2%.
# -----------------------------------------------------------------------------

def test_c04_utility_at_reference_scale():
    start = time.perf_counter()
    medians = {}
    for label, profile, seed in (("humidity[23.5,83.9]x5000", HUMIDITY, 40),
                                 ("taxi[1.0,120.0]x1000", TAXI, 41)):
        params = _profile_params(profile)
        data = _profile_data(profile, seed)
        true_avg = aggregate.exact_mean(data.tolist())
        rel = []
        for trial in range(100):
            priv = perturb_dataset(params, data, seed=seed, stream=trial + 1)
            rel.append(abs((aggregate.avg_star(priv) - true_avg) / true_avg))
        medians[label] = float(np.median(rel))
    elapsed = time.perf_counter() - start
    ok = all(m <= 0.02 for m in medians.values()) and elapsed < 60.0
    _criterion(4, "median |relative error| <= 2% for both dataset profiles", ok,
               "; ".join(f"{k}: {v:.2%}" for k, v in medians.items())
               + f"; {elapsed:.1f}s<60s")


# -----------------------------------------------------------------------------
# 5. Bias invariance: bounds bit-identical, empirical means statistically equal.
# -----------------------------------------------------------------------------

def test_c05_bias_invariance():
    base = _profile_params(HUMIDITY)
    plan = planner.plan(base)
    assert abs(plan.f_estimate) <= 1e-6
    biased = plan.params()
    data = _profile_data(HUMIDITY, seed=50)[:1000]

    bits_equal = True
    for lam in aggregate.default_lambda_grid(base, 10):
        lam = float(lam)
        bits_equal &= aggregate.bernstein_bound_abs(base, data, lam) == \
            aggregate.bernstein_bound_abs(biased, data, lam)
        bits_equal &= aggregate.bernstein_bound_rel(base, data, lam) == \
            aggregate.bernstein_bound_rel(biased, data, lam)

    true_avg = aggregate.exact_mean(data.tolist())
    trials = 100

    def deltas(params, stream_base):
        out = []
        for t in range(trials):
            priv = perturb_dataset(params, data, seed=51, stream=stream_base + t)
            out.append((aggregate.avg_star(priv) - true_avg) / true_avg)
        return np.array(out)

    d0 = deltas(base, 0)
    d1 = deltas(biased, trials)
    se = math.sqrt(np.var(d0, ddof=1) / trials + np.var(d1, ddof=1) / trials)
    gap = abs(float(np.mean(d0) - np.mean(d1)))
    ok = bits_equal and gap < 2 * se
    _criterion(5, "bounds and errors invariant to the planned bias", ok,
               f"bounds bit-identical={bits_equal}; |mean gap|={gap:.2e}<2SE={2 * se:.2e}")


# -----------------------------------------------------------------------------
# 6. Finite-precision crossover on the large-bias study configuration.
# -----------------------------------------------------------------------------

def test_c06_precision_crossover():
    center, half, n = 1000.0, 100.0, 1000
    data = uniform_stream(60, stream=0x5EED).uniform(center - half, center + half, n)
    decades = range(3, 22)
    f_abs, err_e, err_avg = {}, {}, {}
    for k in decades:
        params = derive_params(1.0, center, half, 10.0 ** k)
        f_abs[k] = abs(planner.finite_precision_estimate(params))
        err_e[k] = abs(aggregate.relative_expectation_error(
            params, center, samples=10 ** 5, seed=61))
        true_avg = aggregate.exact_mean(data.tolist())
        rel = []
        for trial in range(15):  # median damps single-trial sampling noise
            priv = perturb_dataset(params, data, seed=62, stream=trial)
            rel.append(abs((aggregate.avg_star(priv) - true_avg) / true_avg))
        err_avg[k] = float(np.median(rel))

    flat = all(err_e[k] < 0.01 and err_avg[k] < 0.01 for k in range(3, 16))
    clipped = abs(err_e[20] - 1.0) <= 0.01 and abs(err_avg[20] - 1.0) <= 0.01
    onset_f = min(k for k in decades if f_abs[k] >= 0.01)
    onset_err = min(k for k in decades
                    if max(err_e[k], err_avg[k]) >= 0.01)
    bracketed = abs(onset_f - onset_err) <= 1
    ok = flat and clipped and bracketed
    _criterion(6, "distortion flat through 1e15, clipped at 1e20, onset bracketed",
               ok, f"flat={flat}; |err(1e20)-100%|<=1%={clipped}; "
                   f"onset(F)=1e{onset_f} vs onset(err)=1e{onset_err}")


# -----------------------------------------------------------------------------
# 7. Shared-bit and transmission law at the canonical configuration.
# -----------------------------------------------------------------------------

def test_c07_shared_bits_and_transmission():
    base = derive_params(1.0, 10.0, 5.0)
    plan = planner.plan(base, target_exponent=6)
    gamma_ok = plan.gamma_min == 12 and plan.tr == 0.8125

    params = plan.params()
    data = uniform_stream(70).uniform(params.domain_min, params.domain_max, 10 ** 5)
    priv = perturb_dataset(params, data, seed=71)
    profile = fpbits.shared_bits(priv.samples)
    shares = profile.shared_prefix_len >= plan.gamma_min

    frame = codec.encode(plan, priv)
    back = codec.decode(codec.from_bytes(codec.to_bytes(frame)))
    lossless = bool(np.array_equal(priv.samples.view(np.uint64),
                                   back.samples.view(np.uint64)))
    size_exact = frame.payload_bits / (64 * frame.n) == plan.tr
    ok = gamma_ok and shares and lossless and size_exact
    _criterion(7, "gamma=12, TR=0.8125, shared prefix held, codec lossless", ok,
               f"gamma={plan.gamma_min}, tr={plan.tr}, "
               f"prefix_len={profile.shared_prefix_len}, lossless={lossless}, "
               f"size_exact={size_exact}")


# -----------------------------------------------------------------------------
# 8. Vulnerability reproduced without bias, eliminated by the planned bias.
# -----------------------------------------------------------------------------

def test_c08_vulnerability_reproduction_and_fix():
    start = time.perf_counter()
    base = derive_params(1.0, 10.0, 5.0)
    x_i, x_j = 7.5, 12.5

    verdict = audit.find_witness(base, x_i, x_j, count=1 << 16)
    witness_ok = verdict.vulnerable and verdict.witness is not None
    if witness_ok:
        w = verdict.witness
        mine, other = (w.x_i, w.x_j) if w.reachable_from == "x_i" else (w.x_j, w.x_i)
        witness_ok &= audit.reachable(base, mine, w.x_star) is not None
        witness_ok &= audit.reachable(base, other, w.x_star) is None

    assert planner.vulnerability_exponent(base) == 6
    planned = planner.plan(base, target_exponent=6).params()
    hole_counts = []
    for x in (x_i, x_j):
        hole_counts += [w.hole_count for w in audit.collect_windows(planned, x, 1 << 16)]
    clean = all(c == 0 for c in hole_counts)
    clean &= not audit.find_witness(planned, x_i, x_j, count=1 << 16).vulnerable

    elapsed = time.perf_counter() - start
    ok = witness_ok and clean and elapsed < 30.0
    _criterion(8, "unbiased sampler leaks a witness, planned bias leaves no holes",
               ok, f"witness={verdict.witness!r}; planned holes={hole_counts}; "
                   f"{elapsed:.1f}s<30s")


# -----------------------------------------------------------------------------
# 9. Compression trend within the precision-safe region.
# -----------------------------------------------------------------------------

def test_c09_compression_trend():
    base = _profile_params(HUMIDITY)
    data = _profile_data(HUMIDITY, seed=90)
    cr_plain = compressmeter.compression_ratio(
        perturb_dataset(base, data, seed=91).samples)

    e = planner.minimal_vulnerability_free_exponent(base)
    ratios = []
    while True:
        plan = planner.plan(base, target_exponent=e)
        if abs(plan.f_estimate) > 1e-6:
            break
        priv = perturb_dataset(plan.params(), data, seed=91)
        ratios.append(compressmeter.compression_ratio(priv.samples))
        e += 4
    monotone = all(b <= a for a, b in zip(ratios, ratios[1:]))
    improved = ratios[-1] < cr_plain
    ok = monotone and improved and len(ratios) >= 4
    _criterion(9, "surrogate CR non-increasing in the safe region and below "
                  "the unbiased CR", ok,
               f"cr(abar=0)={cr_plain:.4f}; planned={['%.4f' % r for r in ratios]}")


# -----------------------------------------------------------------------------
# 10. Byte-identical CLI outputs for a fixed seed.
# -----------------------------------------------------------------------------

def test_c10_cli_determinism(tmp_path):
    def run_all(outdir):
        outdir.mkdir()
        commands = [
            ["perturb", "--epsilon", "1", "--center", "10", "--half-range", "5",
             "--exponent", "6", "--synthetic", "300", "--seed", "5",
             "--out", str(outdir / "priv.csv")],
            ["sweep-error", "--epsilon", "0.5,1.0", "--center", "10",
             "--half-range", "5", "--synthetic", "80", "--trials", "5",
             "--seed", "5", "--out", str(outdir / "error.csv")],
            ["sweep-bound", "--epsilon", "1", "--center", "10", "--half-range", "5",
             "--synthetic", "120", "--trials", "5", "--seed", "5",
             "--lambda-points", "10", "--out", str(outdir / "bound.csv")],
            ["sweep-trcr", "--epsilon", "1", "--center", "10", "--half-range", "5",
             "--synthetic", "100", "--seed", "5", "--exponent-span", "8",
             "--skip-decades", "--out", str(outdir / "trcr.csv")],
            ["audit", "--epsilon", "1", "--center", "10", "--half-range", "5",
             "--exponent", "6", "--count", "4096", "--out", str(outdir / "audit.txt")],
        ]
        for command in commands:
            proc = subprocess.run([sys.executable, "-m", "zeal.cli"] + command,
                                  capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr

    run_all(tmp_path / "a")
    run_all(tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    identical = {}
    for name in names:
        identical[name] = (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()
    ok = all(identical.values()) and len(names) >= 8  # CSVs, figures, audit text
    _criterion(10, "two identical CLI runs produce byte-identical outputs", ok,
               "; ".join(f"{k}:{'=' if v else '!='}" for k, v in identical.items()))
