"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest -m acceptance -s`` or ``python -m tests.test_acceptance``.
"""

import json
import time

import numpy as np
import pytest

from diarkit.clustering import ahc_cluster
from diarkit.formats import (
    DomainProfile,
    ProfileSet,
    ScoringRegions,
    SegmentTable,
    UtteranceTable,
    parse_embeddings,
    parse_rttm,
    parse_uem,
    read_profiles,
    write_embeddings,
    write_profiles,
    write_rttm,
    write_uem,
)
from diarkit.metrics import compute_der, jer_per_speaker, optimal_mapping
from diarkit.plda import PldaModel, plda_score_pair, plda_train_em
from diarkit.reseg import VbConfig, forward_backward, vb_resegment

from .helpers import random_model, to_annotation, to_regions
from .oracles import (
    FRAME,
    brute_force_mapping,
    brute_force_posteriors,
    dense_llr,
    frame_der,
    frame_jer,
    naive_ahc,
    random_annotation_frames,
)
from .pipeline import full_pipeline, run
from .test_formats import annotations_close, random_annotations

pytestmark = pytest.mark.acceptance


@pytest.fixture()
def report(capsys):
    def emit(n, title, ok, detail=""):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else ""))
        assert ok, f"criterion {n} failed: {detail}"

    return emit


def _random_case(rng, max_spk, max_frames):
    n = int(rng.integers(10, max_frames + 1))
    ref = random_annotation_frames(rng, n, int(rng.integers(1, max_spk + 1)), "r", overlap=bool(rng.integers(2)))
    hyp = random_annotation_frames(rng, n, int(rng.integers(0, max_spk + 1)), "h", overlap=bool(rng.integers(2)))
    region = np.ones(n, dtype=bool)
    if rng.integers(2):
        a, b = sorted(rng.integers(0, n, size=2))
        region[:] = False
        region[a:b + 1] = True
    return ref, hyp, region


def test_1_der_frame_oracle(report):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(500):
        ref, hyp, region = _random_case(rng, 4, 6000)
        mapping, _ = brute_force_mapping(ref, hyp, region)
        c = compute_der(to_annotation("r", ref), to_annotation("r", hyp), to_regions("r", region), mapping)
        got = tuple(round(x / FRAME) for x in (c.miss, c.false_alarm, c.confusion, c.total_ref))
        want = frame_der(ref, hyp, region, mapping)
        # interval lengths are sums of 10 ms frames; converting back must land on the same integers
        exact = got == want and all(abs(x / FRAME - round(x / FRAME)) < 1e-6
                                    for x in (c.miss, c.false_alarm, c.confusion, c.total_ref))
        bad += not exact
    elapsed = time.perf_counter() - t0
    report(1, "DER equals 10 ms frame oracle", bad == 0 and elapsed < 10,
           f"{500 - bad}/500 exact, {elapsed:.1f} s")


def test_2_mapping_jer_enumeration(report):
    rng = np.random.default_rng(2)
    bad = 0
    for _ in range(200):
        ref, hyp, region = _random_case(rng, 6, 600)
        want_map, _ = brute_force_mapping(ref, hyp, region)
        R, H, U = to_annotation("r", ref), to_annotation("r", hyp), to_regions("r", region)
        got_map = optimal_mapping(R, H, U)
        want_jer = frame_jer(ref, hyp, region, want_map)
        got_jer = jer_per_speaker(R, H, U, got_map)
        same_jer = set(want_jer) == set(got_jer) and all(abs(got_jer[s] - want_jer[s]) < 1e-12 for s in want_jer)
        bad += not (got_map == want_map and same_jer)
    report(2, "mapping and JER equal exhaustive enumeration", bad == 0, f"{200 - bad}/200 exact")


def test_3_plda_dense_oracle(report):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(1, 9))
        m = random_model(rng, d, scale=float(rng.uniform(0.1, 5)))
        x1, x2 = rng.standard_normal(d) * 2, rng.standard_normal(d) * 2
        worst = max(worst, abs(plda_score_pair(m, x1, x2) - dense_llr(m.mu, m.sigma_b, m.sigma_w, x1, x2)))
    one = PldaModel(np.zeros(1), np.eye(1), np.eye(1))
    d1 = abs(plda_score_pair(one, [0.0], [0.0]) - 0.5 * np.log(4 / 3))
    report(3, "PLDA LLR equals dense Gaussian evaluation", worst < 1e-8 and d1 < 1e-9,
           f"max |diff| {worst:.2e}, D=1 |diff| {d1:.1e}")


def test_4_plda_em_recovery(report):
    rng = np.random.default_rng(0)
    d, n_spk, n_per = 8, 200, 50
    Q = np.linalg.qr(rng.standard_normal((d, d)))[0]
    sb = Q @ np.diag([10, 2, 1, 0.5, 0.2, 0.1, 0.05, 0.02]) @ Q.T
    sw = np.diag(np.linspace(0.5, 1.5, d))
    mu = rng.standard_normal(d)
    y = rng.multivariate_normal(np.zeros(d), sb, n_spk)
    X = mu + np.repeat(y, n_per, axis=0) + rng.multivariate_normal(np.zeros(d), sw, n_spk * n_per)
    labels = np.repeat(np.arange(n_spk), n_per)
    t0 = time.perf_counter()
    model, trace = plda_train_em(X, labels, iters=20, return_trace=True)
    elapsed = time.perf_counter() - t0
    eb = np.linalg.norm(model.sigma_b - sb) / np.linalg.norm(sb)
    ew = np.linalg.norm(model.sigma_w - sw) / np.linalg.norm(sw)
    mono = bool(np.all(np.diff(trace) >= 0))
    report(4, "PLDA EM recovers covariances, monotone likelihood",
           eb < 0.15 and ew < 0.15 and mono and elapsed < 30,
           f"rel err Sb {eb:.3f} Sw {ew:.3f}, monotone={mono}, {elapsed:.2f} s")


def test_5_ahc_naive_oracle(report):
    rng = np.random.default_rng(5)
    bad = non_mono = 0
    ladder = np.linspace(-2, 2, 41)
    for i in range(1000):
        n = int(rng.integers(1, 13))
        A = rng.integers(-3, 4, size=(n, n)).astype(float) if i % 3 == 0 else rng.standard_normal((n, n))
        S = np.triu(A, 1)
        S = S + S.T
        thr = float(rng.normal())
        bad += not np.array_equal(ahc_cluster(S, thr).labels, naive_ahc(S, thr))
        counts = [ahc_cluster(S, t).n_clusters for t in ladder]
        non_mono += counts != sorted(counts)
    report(5, "AHC equals naive reference, monotone in threshold", bad == 0 and non_mono == 0,
           f"{1000 - bad}/1000 identical, {non_mono} non-monotone ladders")


def test_6_vb_hmm(report):
    worst = 0.0
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        T, S = int(rng.integers(1, 9)), int(rng.integers(1, 4))
        lls = rng.normal(scale=3, size=(T, S))
        loop = float(rng.uniform(0.05, 0.95))
        post, ev = forward_backward(lls, loop)
        want, want_ev = brute_force_posteriors(lls, loop)
        worst = max(worst, float(np.abs(post - want).max()), abs(ev - want_ev))

    recov = []
    elbo_ok = True
    for seed in range(10):
        rng = np.random.default_rng(seed)
        dim, T = 6, 200
        model = PldaModel(np.zeros(dim), np.eye(dim) * 16, np.eye(dim) * 0.5)
        y = rng.standard_normal((2, dim)) * 4
        truth = np.repeat([0, 1, 0, 1], T // 4)
        X = y[truth] + rng.standard_normal((T, dim)) * np.sqrt(0.5)
        init = truth.copy()
        flip = rng.choice(T, size=T // 10, replace=False)
        init[flip] = 1 - init[flip]
        res = vb_resegment(X, init, model, cfg=VbConfig())
        recov.append(float(np.mean(res.labels == truth)))
        elbo_ok &= bool(np.all(np.diff(res.elbo_trace) >= -1e-6))
    report(6, "forward-backward equals path enumeration, ELBO monotone, corruption recovered",
           worst < 1e-10 and elbo_ok and min(recov) >= 0.95,
           f"max |diff| {worst:.1e}, min recovery {min(recov):.3f}")


def test_7_adi_protocol(report, tmp_path):
    accs, timings, identical = [], [], True
    for spread in (3.0, 0.5, 0.25):
        c = tmp_path / f"c{spread}"
        run("synth", "--out-dir", c, "--domains", 11, "--n-recordings", 254, "--duration", 20,
            "--domain-spread", spread, "--seed", 7)
        utt = c / "dev" / "utterances.txt"
        outs = []
        for rep in range(2 if spread == 3.0 else 1):
            out = tmp_path / f"bench{spread}_{rep}.json"
            t0 = time.perf_counter()
            run("adi", "bench", "--embeddings", utt, "--trials", 1000, "--train-size", 200, "--seed", 0,
                "--out", out)
            timings.append(time.perf_counter() - t0)
            outs.append(out)
        if len(outs) == 2:
            identical = outs[0].read_bytes() == outs[1].read_bytes() and (
                outs[0].with_suffix(".per_domain.csv").read_bytes()
                == outs[1].with_suffix(".per_domain.csv").read_bytes())
        accs.append(json.loads(outs[0].read_text())["mean_accuracy"])
    mono = all(b <= a for a, b in zip(accs, accs[1:]))
    report(7, "ADI bench: fast, deterministic, accurate, degrades with separation",
           max(timings) < 60 and identical and accs[0] >= 0.99 and mono,
           f"accuracy {', '.join(f'{a:.4f}' for a in accs)}, slowest {max(timings):.1f} s, byte-identical={identical}")


def test_8_direction_of_improvement(report, tmp_path):
    t0 = time.perf_counter()
    summary, eval_der = full_pipeline(tmp_path, seed=0, reseg=True)
    elapsed = time.perf_counter() - t0
    ok = elapsed < 120
    parts = []
    for variant, block in summary.items():
        p = block["pooled_der"]
        ok &= p["M2"] <= p["M1"] + 1e-12 and p["M1"] <= p["B"] + 1e-12 and p["M2"] <= p["global_best"] + 1e-12
        parts.append(f"{variant} dev B {p['B']:.4f} M1 {p['M1']:.4f} M2 {p['M2']:.4f}")
    # per-domain optimum never exceeds the global profile on that domain
    for variant, stem in (("first_pass", "profiles"), ("reseg", "profiles.reseg")):
        rows = [l.split(",") for l in (tmp_path / f"{stem}.grid.csv").read_text().splitlines()[1:]]
        per = summary[variant]["per_domain"]
        glob = json.loads((tmp_path / f"{stem}.json").read_text())["fallback"]
        for dom, best in per.items():
            g = [float(r[3]) for r in rows if r[0] == dom and float(r[1]) == glob["ahc_threshold"]
                 and float(r[2]) == glob["pca_energy"]]
            ok &= bool(g) and best["der"] <= g[0] + 1e-12
    parts.append(f"{elapsed:.1f} s")
    report(8, "pooled dev DER M2 <= M1 <= B; end-to-end CLI under 2 min", ok, "; ".join(parts))


def test_9_format_round_trips(report):
    rng = np.random.default_rng(9)
    fails = {"rttm": 0, "uem": 0, "embeddings": 0, "profiles": 0}
    for _ in range(100):
        anns = random_annotations(rng)
        fails["rttm"] += not annotations_close(anns, parse_rttm(write_rttm(anns)))

        edges = np.unique(np.round(rng.uniform(0, 600, size=2 * int(rng.integers(1, 5))), 3))
        edges = edges[: len(edges) // 2 * 2]
        regs = {"r": ScoringRegions("r", tuple(zip(edges[::2].tolist(), edges[1::2].tolist())))}
        fails["uem"] += parse_uem(write_uem(regs)) != regs

        n, d = int(rng.integers(1, 8)), int(rng.integers(1, 12))
        vec = rng.standard_normal((n, d)) * 10.0 ** int(rng.integers(-6, 6))
        ut = UtteranceTable([f"u{j}" for j in range(n)], vec, [f"dom{j % 3}" for j in range(n)])
        back = parse_embeddings(write_embeddings(ut))
        on = rng.uniform(0, 100, n)
        st = SegmentTable(["rec"] * n, on, on + rng.uniform(0.01, 2, n), vec)
        sback = parse_embeddings(write_embeddings(st), form="segment")
        fails["embeddings"] += not (back.ids == ut.ids and back.domains == ut.domains
                                    and np.array_equal(back.vectors, vec) and np.array_equal(sback.vectors, vec)
                                    and np.array_equal(sback.onsets, st.onsets)
                                    and np.array_equal(sback.offsets, st.offsets))

        profs = {f"d{i}": DomainProfile(f"d{i}", float(rng.normal(0, 5)), float(rng.uniform(1e-3, 1)))
                 for i in range(int(rng.integers(1, 12)))}
        ps = ProfileSet(profs, DomainProfile("global", float(rng.normal()), 0.30))
        back_p = read_profiles(write_profiles(ps))
        fails["profiles"] += not (back_p.profiles == ps.profiles and back_p.fallback == ps.fallback)
    report(9, "RTTM/UEM/embeddings/profiles write-then-parse identity", not any(fails.values()),
           ", ".join(f"{k} {100 - v}/100" for k, v in fails.items()))


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
