"""Acceptance gate: every primary criterion at its stated tolerance.

Each test prints one [PASS]/[FAIL] line (visible with -s or in captured
output) and enforces the criterion's tolerances and time budgets.
"""

import itertools
import math
import random
import time

import numpy as np

from qoekit.analysis import jacobi_eigh
from qoekit.cli import main
from qoekit.model import DIMENSIONS, PipelineParams
from qoekit.pipeline import run_pipeline, zscore_normalize
from qoekit.predictor import ablate, build_dataset, evaluate, split_by_category, train
from qoekit.service import SessionService
from qoekit.shaper import VirtualClock, schedule_emission
from qoekit.stats import kendall, pearson, spearman
from qoekit.synth import SyntheticWorld, generate
from test_service import make_content, register
from test_stats import (kendall_bruteforce, pearson_bruteforce,
                        spearman_bruteforce)


def report(name: str, ok: bool, detail: str = "") -> None:
    marker = "PASS" if ok else "FAIL"
    print(f"[{marker}] {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


def test_rank_statistic_oracle():
    started = time.monotonic()
    worst = 0.0
    for n in range(2, 7):
        identity = list(range(1, n + 1))
        for perm in itertools.permutations(identity):
            perm = list(perm)
            worst = max(worst,
                        abs(spearman(perm, identity) - spearman_bruteforce(perm, identity)),
                        abs(kendall(perm, identity) - kendall_bruteforce(perm, identity)),
                        abs(pearson(perm, identity) - pearson_bruteforce(perm, identity)))
    rng = random.Random(2024)
    checked = 0
    while checked < 1000:
        n = rng.randint(2, 10)
        a = [rng.randint(1, 5) for _ in range(n)]
        b = [rng.randint(1, 5) for _ in range(n)]
        if len(set(a)) == 1 or len(set(b)) == 1:
            continue
        worst = max(worst,
                    abs(spearman(a, b) - spearman_bruteforce(a, b)),
                    abs(kendall(a, b) - kendall_bruteforce(a, b)),
                    abs(pearson(a, b) - pearson_bruteforce(a, b)))
        checked += 1
    elapsed = time.monotonic() - started
    report("rank-statistic oracle", worst <= 1e-12 and elapsed < 5.0,
           f"worst |delta| {worst:.2e}, {elapsed:.2f}s")


def test_zscore_law(grid):
    records, _ = generate(SyntheticWorld(seed=31), grid, 15, 90)
    normalized = zscore_normalize(records)
    groups: dict[tuple, list[float]] = {}
    for item in normalized:
        groups.setdefault((item.rater_id, item.dimension), []).append(item.z)
    raw: dict[tuple, list[int]] = {}
    for record in records:
        for dim in DIMENSIONS:
            raw.setdefault((record.rater_id, dim), []).append(record.scores[dim])
    worst_mean = worst_sd = 0.0
    zero_groups_ok = True
    for key, zs in groups.items():
        zs = np.array(zs)
        if np.std(raw[key]) == 0:
            zero_groups_ok &= bool(np.all(zs == 0.0))
            continue
        worst_mean = max(worst_mean, abs(float(zs.mean())))
        worst_sd = max(worst_sd, abs(float(zs.std()) - 1.0))
    report("z-score law", worst_mean < 1e-9 and worst_sd < 1e-9 and zero_groups_ok,
           f"|mean| {worst_mean:.1e}, |sd-1| {worst_sd:.1e}")


def test_pipeline_bookkeeping(bookkeeping_store):
    records, planted = bookkeeping_store
    table, rep = run_pipeline(records, PipelineParams())
    rejected = rep.rejected_by_z | rep.rejected_by_srcc | rep.insufficient_overlap
    ok = (rep.records_in == 15768
          and rep.records_removed == 594
          and rep.records_out == 15174
          and rejected == set(planted))
    report("pipeline bookkeeping 15768 -> 15174", ok,
           f"in {rep.records_in}, removed {rep.records_removed}, out {rep.records_out}")


def test_synthetic_recovery(grid):
    started = time.monotonic()
    n_seeds = 100
    rejections = 0
    min_srcc = 1.0
    for seed in range(n_seeds):
        world = SyntheticWorld(seed=seed)  # 1 uniform-random adversary, noise 0.3
        records, truth = generate(world, grid, 21, 144)
        table, rep = run_pipeline(records, PipelineParams())
        adversary = next(iter(truth.adversarial))
        if adversary in rep.rejected_by_srcc:
            rejections += 1
        mos, utility = [], []
        for cond in truth.conditions:
            key = (cond, "overall")
            if key in table.entries:
                mos.append(table.entries[key].mos_z)
                utility.append(truth.overall_utility(cond))
        min_srcc = min(min_srcc, spearman(mos, utility))
    elapsed = time.monotonic() - started
    ok = rejections >= 0.95 * n_seeds and min_srcc >= 0.9 and elapsed < 30.0
    report("synthetic recovery", ok,
           f"adversary rejected {rejections}/{n_seeds}, "
           f"min SRCC(MOS, truth) {min_srcc:.4f}, {elapsed:.1f}s")


def test_scheduler_exactness(grid):
    ok = True
    for n in (1, 4, 50, 500):
        tokens = ["t"] * n
        for qos in grid.qos_points():
            schedule = schedule_emission(tokens, qos)
            k = math.floor(qos.pause_pos * n)
            for i, (_tok, at) in enumerate(schedule.items):
                expected = i * qos.speed + (qos.pause_dur if i >= k else 0.0)
                ok &= at == expected
            ok &= schedule.total_duration_s == (n - 1) * qos.speed + qos.pause_dur
    report("scheduler exactness over 36 x {1,4,50,500}", ok)


def test_pca_properties():
    rng = np.random.default_rng(555)
    worst_recon = worst_orth = worst_sum = 0.0
    for _ in range(1000):
        a = rng.normal(size=(5, 5))
        sigma = a.T @ a
        values, vectors = jacobi_eigh(sigma)
        rebuilt = vectors.T @ np.diag(values) @ vectors
        worst_recon = max(worst_recon, float(np.linalg.norm(sigma - rebuilt)))
        worst_orth = max(worst_orth,
                         float(np.max(np.abs(vectors @ vectors.T - np.eye(5)))))
        worst_sum = max(worst_sum, abs(float((values / values.sum()).sum()) - 1.0))
    diag_values, _ = jacobi_eigh(np.diag([4.0, 1.0, 1.0, 1.0, 1.0]))
    diag_ratio = diag_values[0] / diag_values.sum()
    ok = (worst_recon < 1e-9 and worst_orth < 1e-9 and worst_sum < 1e-9
          and abs(diag_ratio - 0.5) < 1e-9)
    report("pca properties (1000 fixtures)", ok,
           f"recon {worst_recon:.1e}, orth {worst_orth:.1e}, ratio1 {diag_ratio}")


def test_regression_sanity(grid):
    # noiseless recovery
    from qoekit.model import to_feature_vector
    from qoekit.predictor import Dataset, DatasetRow
    weights = (2.0, 3.0, 0.0, 0.0, 0.0)
    rows = []
    cats = ("knowledge_reasoning", "creative_tasks", "lifestyle_entertainment",
            "empathy_growth", "society_professional")
    for i, (content, qos) in enumerate(grid.combos()):
        fv = to_feature_vector(content, qos)
        rows.append(DatasetRow(fv, float(np.dot(fv.values, weights)),
                               f"q{i % 20:02d}", cats[(i % 20) % 5], "overall"))
    model = train("linear-ridge", Dataset(rows), seed=0)
    recovery = float(np.max(np.abs(model.regressor.coef
                                   - np.array([0.0, *weights]))))

    # noisy synthetic world, category-held-out split, full feature set
    records, _ = generate(SyntheticWorld(seed=0), grid, 21, 144)
    dataset = build_dataset(records, "overall", "mos")
    train_set, test_set = split_by_category(dataset, seed=0)
    forest = train("tree-ensemble", train_set, seed=0)
    srcc = evaluate(forest, test_set).srcc
    ok = recovery <= 1e-6 and srcc >= 0.9
    report("regression sanity", ok,
           f"weight recovery {recovery:.1e}, held-out SRCC {srcc:.3f}")


def test_ablation_shape(grid):
    records, _ = generate(SyntheticWorld(seed=0), grid, 21, 144)
    dataset = build_dataset(records, "overall", "mos")
    results = ablate(dataset, "tree-ensemble", seed=0)
    full = results["none"].srcc
    drops = {name: full - metrics.srcc for name, metrics in results.items()
             if name != "none"}
    biggest = max(drops, key=drops.get)
    ok = biggest == "accuracy" and drops["accuracy"] > 0.1
    report("ablation shape (accuracy dominates)", ok,
           "drops " + ", ".join(f"{k}={v:.3f}" for k, v in drops.items()))


def test_balance_property(grid):
    rng = random.Random(777)
    sequences = 200
    worst_spread = 0
    for trial in range(sequences):
        import tempfile
        with tempfile.TemporaryDirectory() as store:
            svc = SessionService(make_content(2), grid, store, seed=trial,
                                 clock_factory=VirtualClock)
            raters = [register(svc) for _ in range(rng.randint(2, 5))]
            budget = {r: 4 for r in raters}
            for _ in range(rng.randint(1, 12)):
                available = [r for r in raters if budget[r] > 0]
                if not available:
                    break
                rater = rng.choice(available)
                budget[rater] -= 1
                svc.create_session(rater)
                for qid in ("q00", "q01"):
                    counts = [svc.qos_counts.get((qid, q), 0)
                              for q in grid.qos_points()]
                    worst_spread = max(worst_spread, max(counts) - min(counts))
    report("assignment balance (200 sequences)", worst_spread <= 1,
           f"worst per-question QoS spread {worst_spread}")


def test_end_to_end_smoke(tmp_path):
    started = time.monotonic()
    store = tmp_path / "ratings.jsonl"
    mos = tmp_path / "mos.csv"
    report_file = tmp_path / "report.json"
    analysis_dir = tmp_path / "analysis"
    model = tmp_path / "model.bin"
    ablation = tmp_path / "ablation.csv"

    steps = [
        ["--seed", "0", "synth", "--raters", "21", "--conditions", "144",
         "--out", str(store)],
        ["--seed", "0", "process", "--in", str(store), "--out", str(mos),
         "--report", str(report_file)],
        ["--seed", "0", "analyze", "pca", "--records", str(store),
         "--out", str(analysis_dir)],
        ["--seed", "0", "train", "--in", str(store), "--model", "forest",
         "--out", str(model)],
        ["--seed", "0", "ablate", "--in", str(store), "--model", "forest",
         "--out", str(ablation)],
        ["predict", "--model", str(model), "--rho", "1", "--alpha", "1",
         "--speed", "0.05", "--pos", "0.25", "--dur", "3"],
    ]
    codes = [main(argv) for argv in steps]
    artifacts = [store, store.parent / "raters.jsonl", store.parent / "truth.json",
                 mos, report_file, analysis_dir / "pca.json", model, ablation]
    elapsed = time.monotonic() - started
    ok = all(c == 0 for c in codes) and all(p.exists() for p in artifacts) \
        and elapsed < 60.0
    report("end-to-end smoke", ok,
           f"exit codes {codes}, {elapsed:.1f}s")
