'''
dagjoint: factorized joint multi-agent trajectory prediction over directed
acyclic interaction graphs.
'''

from .config import SyntheticSpec, TrainConfig
from .dag import Dag, dagify, enumerate_cycles, level_schedule
from .decoder import JointPredictor, TrajectoryBundle, decode_factorized, decode_nonfactorized
from .errors import DagJointError, DivergenceError, ValidationError
from .graph_predictor import GraphPredictor, predict_dag
from .labeling import InteractionGraph, build_ground_truth_graph
from .metrics import MetricReport
from .scene import AgentTrack, Scene, load_corpus, save_corpus
from .synthetic import generate_corpus
from .train import train_baseline, train_two_stage

__version__ = "0.1.0"
