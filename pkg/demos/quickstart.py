"""Sample data from a two-factor model and recover its structure by exhaustive BIC search."""
import numpy as np

from latentscore import (Dataset, SearchConfig, exact_search, markov_equivalent,
                         random_parameters, sample)
from latentscore.evaluation import ground_truth

truth = ground_truth("1f-pair-3-3")[1]
rng = np.random.default_rng(0)
data = Dataset.from_samples(sample(random_parameters(truth, rng), 5000, rng))

report = exact_search(data, SearchConfig(workers=1))
print(report.table(5))
print("best:", report.best.graph.to_dict())
print("equivalent to truth:", markov_equivalent(report.best.graph, truth))
