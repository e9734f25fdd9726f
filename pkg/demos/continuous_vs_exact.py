"""Small benchmark: exhaustive search against the relaxed continuous search on one truth."""
from latentscore import BenchmarkConfig, FitOptions, run_benchmark
from latentscore.evaluation import metric_table
from latentscore.search import ContinuousOptions

cfg = BenchmarkConfig(truths=("1f-pair-3-3",), sample_sizes=(300, 3000), trials=2,
                      methods=("exact", "continuous"), fit_options=FitOptions(restarts=2),
                      continuous=ContinuousOptions(restarts=3, iterations=1000))
rows = run_benchmark(cfg)
print(metric_table(rows, "f1"))
print(metric_table(rows, "shd"))
