"""
Training bench: format comparison, Gaussian width and tissue context
=====================================================================

Small runs; the acceptance suite uses the full plans.
"""
import time

from celldet.trainbench.experiments import (BenchmarkPlan, ctm_benchmark_plan, run_ctm_experiment,
                                            run_format_experiment, run_sigma_ablation)

t0 = time.perf_counter()
res = run_format_experiment(BenchmarkPlan(n_train=6, n_test=4), range(2))
for r in res["rows"]:
    print(f"{r['format']:8s} F1 {r['mean_f1']:.3f} +/- {r['std_f1']:.3f}")

res = run_sigma_ablation(BenchmarkPlan(n_train=6, n_test=4), range(2), sigmas_um=(1.0, 4.0))
for r in res["rows"]:
    print(f"sigma {r['sigma_um']} um  P {r['precision']:.3f}  R {r['recall']:.3f}  F1 {r['f1']:.3f}")

res = run_ctm_experiment(ctm_benchmark_plan(n_train=6, n_test=4), range(2))
for r in res["rows"]:
    print(f"{r['model']:12s} F1 {r['mean_f1']:.3f}")
print(f"{time.perf_counter() - t0:.1f}s")
