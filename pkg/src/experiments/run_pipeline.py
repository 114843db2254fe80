'''
End-to-end run through the command line: gen -> label -> train (both stages
and the baseline) -> eval -> plot-emit, all under one run directory.

Usage: python -m experiments.run_pipeline [run_dir]   (from src/)
'''

import json
import os
import sys

RUN = sys.argv[1] if len(sys.argv) > 1 else 'run'
SEED = 0

os.makedirs(RUN, exist_ok=True)

with open(os.path.join(RUN, 'spec.json'), 'w') as f:
    json.dump({'kind': ['crossing_pass_yield', 'leader_follower_chain'], 'min_agents': 2, 'max_agents': 5,
               'position_noise': 0.02, 'velocity_noise': 0.05, 'seed': SEED}, f, indent=2)

with open(os.path.join(RUN, 'config.json'), 'w') as f:
    json.dump({'seed': SEED, 'hidden': 32, 'gru_hidden': 64, 'batch_size': 16, 'epochs_stage1': 4,
               'epochs_stage2': 4, 'decay_epochs': [3], 'progress': False}, f, indent=2)

steps = [
    f'python3 -m dagjoint gen --spec {RUN}/spec.json --count 200 --out {RUN}/corpus',
    f'python3 -m dagjoint label --corpus {RUN}/corpus --out {RUN}/graphs',
    f'python3 -m dagjoint train --config {RUN}/config.json --corpus {RUN}/corpus --stage both --out {RUN}/factorized',
    f'python3 -m dagjoint train --config {RUN}/config.json --corpus {RUN}/corpus --baseline --out {RUN}/baseline',
    f'python3 -m dagjoint eval --checkpoint {RUN}/factorized --baseline {RUN}/baseline --corpus {RUN}/corpus --out {RUN}/report.json',
    f'python3 -m dagjoint plot-emit --report {RUN}/report.json --log {RUN}/factorized/train_log.csv --out {RUN}/plots',
]

for cmd in steps:
    print(cmd)
    status = os.system(cmd)
    if status != 0:
        print("Step failed with status ", status)
        sys.exit(1)
