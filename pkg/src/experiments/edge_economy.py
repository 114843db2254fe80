'''
Sparse vs dense interaction labels on congested scenes (two crossing
convoys, >= 10 agents): directed edges per scene and factorized decoding
wall time over each heuristic's DAG.

Usage: python -m experiments.edge_economy [count]   (from src/)
'''

# libraries
import sys
import time

from dagjoint.config import ScenarioKind, SyntheticSpec, TrainConfig
from dagjoint.evaluate import edge_economy
from dagjoint.log import setup_logging
from dagjoint.synthetic import generate_corpus

setup_logging(1)
st = time.time()

COUNT = int(sys.argv[1]) if len(sys.argv) > 1 else 100

spec = SyntheticSpec(kind=(ScenarioKind.CONGESTED,), min_agents=10, max_agents=14, seed=0)
corpus = generate_corpus(spec, COUNT)
table = edge_economy(corpus, TrainConfig(progress=False))

print(table.describe().to_string(float_format=lambda v: f"{v:.4f}"))
print("Sparse edges per scene: ", round(float(table["sparse_edges"].mean()), 2))
print("Dense edges per scene: ", round(float(table["dense_edges"].mean()), 2))
print("Edge reduction: ", f"{100 * table.attrs['edge_reduction']:.1f}%")
print("Scenes with fewer sparse edges: ", f"{100 * table.attrs['fewer_edges_fraction']:.1f}%")
print("Decode time sparse / dense: ", f"{table.attrs['sparse_seconds']:.3f}s / {table.attrs['dense_seconds']:.3f}s")
print("Sparse fewer on >= 95% of scenes: ", table.attrs["fewer_edges_fraction"] >= 0.95)
print("Sparse decodes faster: ", table.attrs["sparse_seconds"] < table.attrs["dense_seconds"])

et = time.time()
print("Time: ", round(et - st, 1), "s")
