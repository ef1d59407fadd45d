"""The twelve acceptance criteria, each at its stated tolerance and time budget."""

import json
import subprocess
import sys
import time

import pytest

from homlab import experiments
from homlab.groups import abelian, check_axioms, heisenberg

pytestmark = pytest.mark.acceptance

HEIS_L_INF = {"group": {"builtin": "heisenberg"},
              "kernel": {"omega": "sign(x1)", "q": float("inf"), "label": "sign(x1) on H"},
              "lattice": {"R": [4.0, 4.0, 16.0], "half": [24, 24, 24]},
              "decomposition": {"k": [0, 0]},
              "run": {"j": [1, 2, 3, 4], "iters": 30, "tol": 1e-3}}


def timed(kind, cfg=None):
    t0 = time.perf_counter()
    rep = experiments.run(kind, cfg or {})
    return rep, time.perf_counter() - t0


def checks(rep, *needles):
    out = [c for c in rep.checks if any(n in c["name"] for n in needles)]
    assert out, f"no check matching {needles} in {rep.kind}"
    return out


def all_pass(cs):
    return all(c["passed"] for c in cs)


def test_c01_group_axioms(verdict):
    t0 = time.perf_counter()
    worst = {}
    for g in (abelian(1), abelian(3), heisenberg()):
        res = check_axioms(g, 10_000, seed=0)
        worst[g.name] = max(res.values())
    rep, _ = timed("group-check")
    dt = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-10 and rep.passed and dt < 10
    assert verdict(1, ok, f"max residual {max(worst.values()):.2e}, heisenberg suite "
                          f"{'PASS' if rep.passed else 'FAIL'}, {dt:.1f}s")


def test_c02_telescoping(verdict):
    rep, dt = timed("decompose")
    c = checks(rep, "sum of pieces")[0]
    ok = c["passed"] and c["value"] <= 1e-8 and dt < 60
    assert verdict(2, ok, f"reconstruction error {c['value']:.2e} (tol 1e-8), 1025 sites, "
                          f"J=3, k in [-3,3], {dt:.1f}s")


def test_c03_decay(verdict):
    r1, t1 = timed("opnorm")
    rh, th = timed("opnorm", HEIS_L_INF)
    q1, qh = r1.quantities, rh.quantities
    ok = (r1.passed and rh.passed and q1["alpha"] > 0 and qh["alpha"] > 0
          and q1["r2"] >= 0.9 and qh["r2"] >= 0.9 and t1 + th < 600)
    assert verdict(3, ok, f"R: alpha={q1['alpha']:.3f} R2={q1['r2']:.4f}; "
                          f"H 49^3: alpha={qh['alpha']:.3f} R2={qh['r2']:.4f}; {t1 + th:.0f}s")


@pytest.fixture(scope="module")
def cotlar_run():
    return timed("cotlar")


def test_c04_key_estimate(cotlar_run, verdict):
    rep, dt = cotlar_run
    cs = checks(rep, "key estimate")
    q = rep.quantities
    ok = all_pass(cs) and q["key_alpha"] > 0 and q["key_r2"] >= 0.9 and dt < 120
    assert verdict(4, ok, f"alpha={q['key_alpha']:.3f} R2={q['key_r2']:.4f} over |j-k|<=5, "
                          f"{dt:.0f}s (shared run)")


def test_c05_cotlar(cotlar_run, verdict):
    rep, dt = cotlar_run
    cs = checks(rep, "x diagonal", "table maximum")
    worst = max(c["value"] for c in cs if "x diagonal" in c["name"])
    ok = all_pass(cs) and worst <= 0.5 and dt < 300
    assert verdict(5, ok, f"worst |k-k'|=3 ratio {worst:.3g} (<= 0.5), max decreasing "
                          f"{checks(rep, 'table maximum')[0]['passed']}, {dt:.0f}s")


def test_c06_psi_almost_orthogonality(verdict):
    rep, dt = timed("decompose")
    c = checks(rep, "Psi_l")[0]
    ok = c["passed"] and c["value"] <= 2.0 and dt < 60
    assert verdict(6, ok, f"constant spread {c['value']:.4f} over |l-l'|<=4 (limit 2), {dt:.1f}s")


def test_c07_weights(verdict):
    rep, dt = timed("weights")
    oracle = checks(rep, "interval oracle")
    unit = checks(rep, "w = 1")
    jensen = checks(rep, "Jensen")
    ok = all_pass(oracle + unit + jensen) and oracle[0]["value"] <= 0.02 and dt < 120
    assert verdict(7, ok, f"A2 rel. error vs brute force {oracle[0]['value']:.2e} (<= 2%), "
                          f"unit dev {unit[0]['value']:.1e}, Jensen on {len(jensen)} weights, {dt:.1f}s")


def test_c08_dini(verdict):
    rep, dt = timed("dini")
    stab = checks(rep, "normalized Dini")[0]
    closed = checks(rep, "closed form")
    ok = stab["passed"] and stab["value"] <= 3 and all_pass(closed) and len(closed) == 2 and dt < 300
    assert verdict(8, ok, f"normalized Dini spread {stab['value']:.4g} (limit 3), closed forms "
                          f"{'ok' if all_pass(closed) else 'off'}, {dt:.1f}s")


def test_c09_sharpness_consistency(verdict):
    rep, dt = timed("sharpness")
    q = rep.quantities
    bounds = checks(rep, "below C{w}(w)")
    ok = rep.passed and q["exponent"] <= 2.3 and len(bounds) == 5 and all_pass(bounds) and dt < 600
    assert verdict(9, ok, f"growth exponent {q['exponent']:.3f} (<= 2.3), "
                          f"{sum(c['passed'] for c in bounds)}/5 below 10 C{{w}}(w), {dt:.1f}s")


def test_c10_sato(verdict):
    r1, t1 = timed("sato")
    rh, th = timed("sato", {**HEIS_L_INF, "run": {**HEIS_L_INF["run"], "materialized": True}})
    exact = checks(r1, "B_k = A_k", "d_q", "u(const")
    ok = (r1.passed and rh.passed and all_pass(exact) and r1.quantities["alpha"] > 0
          and rh.quantities["alpha"] > 0 and t1 + th < 600)
    assert verdict(10, ok, f"exact identities {'ok' if all_pass(exact) else 'off'}; "
                           f"R alpha={r1.quantities['alpha']:.3f}, H alpha={rh.quantities['alpha']:.3f}; "
                           f"{t1 + th:.0f}s")


def test_c11_biparam(verdict):
    rep, dt = timed("biparam")
    q = rep.quantities
    fac = checks(rep, "tensor factorization")[0]
    sl = checks(rep, "slice integrals")[0]
    dec = checks(rep, "decay in j")
    cf = checks(rep, "Dini closed form")[0]
    ok = (all_pass([fac, sl, cf] + dec) and fac["value"] <= 1e-6 and sl["value"] <= 1e-6
          and dt < 900)
    assert verdict(11, ok, f"factorization {fac['value']:.1e}, slices {sl['value']:.1e}, "
                           f"alpha1={q['alpha_1']:.3f} alpha2={q['alpha_2']:.3f}, "
                           f"Dini1 {cf['value']:.4f}, 513x513, {dt:.0f}s")


def test_c12_determinism(tmp_path, verdict):
    outs = []
    for t in (1, 2):
        d = tmp_path / f"t{t}"
        subprocess.run([sys.executable, "-m", "homlab.cli", "sharpness", "--threads", str(t),
                        "--out", str(d)], check=False, capture_output=True)
        outs.append(d / "report.json")
    a, b = (p.read_bytes() for p in outs)
    m = [json.loads((p.parent / "manifest.json").read_text()) for p in outs]
    ok = a == b and [x["threads"] for x in m] == [1, 2]
    assert verdict(12, ok, f"report.json byte-identical across 1 and 2 threads: {a == b} "
                           f"({len(a)} bytes)")
