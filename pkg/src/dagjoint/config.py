'''
Training and synthetic-corpus configuration: frozen dataclasses mirrored
one-to-one by JSON files.
'''

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import ConfigError
from .labeling import Heuristic


class DecoderKind(str, Enum):
    FACTORIZED = "factorized"
    NONFACTORIZED = "nonfactorized"


class GraphSource(str, Enum):
    LEARNED = "learned"
    GROUND_TRUTH = "ground_truth"


class ScenarioKind(str, Enum):
    CROSSING_PASS_YIELD = "crossing_pass_yield"
    LEADER_FOLLOWER_CHAIN = "leader_follower_chain"
    MERGE = "merge"
    NON_INTERACTIVE = "non_interactive"
    CONGESTED = "congested"


def _tuple(value):
    return tuple(value) if isinstance(value, (list, tuple)) else value


class JsonConfig:
    '''
    JSON round trip for the frozen config dataclasses; unknown keys and
    invalid values raise ConfigError.
    '''

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError(f"{cls.__name__}: expected a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"{cls.__name__}: unknown keys {unknown}")
        try:
            return cls(**{k: _tuple(v) for k, v in doc.items()})
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"{cls.__name__}: {e}") from e

    def to_dict(self):
        doc = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Enum):
                value = value.value
            elif isinstance(value, tuple):
                value = [v.value if isinstance(v, Enum) else v for v in value]
            doc[f.name] = value
        return doc

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{cls.__name__}: invalid JSON: {e}") from e
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        return cls.from_json(path.read_text())

    def dump(self, path):
        Path(path).write_text(self.to_json())

    def spec_hash(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TrainConfig(JsonConfig):
    seed: int = 0
    k: int = 6
    k_prop: int = 15
    eps_i: float = 2.5
    gamma: float = 5.0
    alpha: tuple = (1.0, 2.0, 4.0)
    learning_rate: float = 1e-3
    decay_epochs: tuple = (24, 28)
    decay_factor: float = 0.2
    batch_size: int = 16
    epochs_stage1: int = 30
    epochs_stage2: int = 30
    teacher_forcing: bool = True
    proposal_loss: bool = True
    hidden: int = 64
    gru_hidden: int = 128
    type_embed: int = 16
    a2a_radius: float = 100.0
    t_obs: int = 10
    t_fut: int = 30
    dt: float = 0.1
    heuristic: Heuristic = Heuristic.SPARSE
    decoder: DecoderKind = DecoderKind.FACTORIZED
    train_graph: GraphSource = GraphSource.LEARNED
    progress: bool = True
    grad_clip: float = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "heuristic", Heuristic(self.heuristic))
            object.__setattr__(self, "decoder", DecoderKind(self.decoder))
            object.__setattr__(self, "train_graph", GraphSource(self.train_graph))
        except ValueError as e:
            raise ConfigError(str(e)) from e
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "decay_epochs", tuple(int(e) for e in self.decay_epochs))
        if self.k < 1 or self.k_prop < 1:
            raise ConfigError(f"k and k_prop must be >= 1, got {self.k} / {self.k_prop}")
        if self.learning_rate <= 0 or self.decay_factor <= 0:
            raise ConfigError("learning rate and decay factor must be positive")
        if list(self.decay_epochs) != sorted(set(self.decay_epochs)):
            raise ConfigError(f"decay epochs must be strictly ascending, got {self.decay_epochs}")
        if len(self.alpha) != 3 or min(self.alpha) <= 0:
            raise ConfigError(f"alpha needs three positive class weights, got {self.alpha}")
        if self.gamma < 0 or self.eps_i < 0:
            raise ConfigError("gamma and eps_i must be non-negative")
        if min(self.batch_size, self.hidden, self.gru_hidden, self.type_embed, self.t_obs, self.t_fut) < 1:
            raise ConfigError("batch size, widths and horizons must be positive")
        if self.epochs_stage1 < 0 or self.epochs_stage2 < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.dt <= 0 or self.a2a_radius <= 0:
            raise ConfigError("dt and a2a_radius must be positive")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("grad_clip must be positive when set")

    @classmethod
    def interaction_preset(cls, **changes):
        base = cls(
            k=6, k_prop=15, eps_i=2.5, gamma=5.0, alpha=(1.0, 2.0, 4.0),
            learning_rate=1e-3, decay_epochs=(40, 48), decay_factor=0.2,
            batch_size=64, epochs_stage1=50, epochs_stage2=50,
            hidden=128, gru_hidden=256, t_obs=10, t_fut=30,
        )
        return base.replace(**changes)

    @classmethod
    def argoverse_preset(cls, **changes):
        base = cls(
            k=6, k_prop=15, eps_i=6.0, gamma=5.0, alpha=(1.0, 4.0, 4.0),
            learning_rate=1e-3, decay_epochs=(32,), decay_factor=0.1,
            batch_size=128, epochs_stage1=36, epochs_stage2=36,
            hidden=128, gru_hidden=256, t_obs=20, t_fut=30,
        )
        return base.replace(**changes)


@dataclass(frozen=True)
class SyntheticSpec(JsonConfig):
    kind: tuple = (ScenarioKind.CROSSING_PASS_YIELD,)
    min_agents: int = 2
    max_agents: int = 5
    position_noise: float = 0.0
    velocity_noise: float = 0.0
    seed: int = 0
    t_obs: int = 10
    t_fut: int = 30
    dt: float = 0.1
    context_agents: int = 0
    eps_i: float = 2.5

    def __post_init__(self):
        kinds = self.kind if isinstance(self.kind, (list, tuple)) else (self.kind,)
        try:
            object.__setattr__(self, "kind", tuple(ScenarioKind(k) for k in kinds))
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if not self.kind:
            raise ConfigError("at least one scenario kind is required")
        if self.min_agents < 1 or self.max_agents < self.min_agents:
            raise ConfigError(f"need 1 <= min_agents <= max_agents, got {self.min_agents}..{self.max_agents}")
        if self.position_noise < 0 or self.velocity_noise < 0:
            raise ConfigError("noise scales must be non-negative")
        if self.t_obs < 2 or self.t_fut < 1 or self.dt <= 0:
            raise ConfigError("need t_obs >= 2, t_fut >= 1 and dt > 0")
        if self.eps_i < 0:
            raise ConfigError("eps_i must be non-negative")
        if self.context_agents < 0:
            raise ConfigError("context_agents must be non-negative")

    def kind_for(self, index):
        return self.kind[index % len(self.kind)]
