"""Synthetic corpus generator and obfuscation transforms.

Stands in for a real APK corpus at desk scale: every sample is a call
graph with node-level features whose aggregate forms the sample's feature
row, so feature-level and graph-level views stay consistent under every
transform.

The planted design gives the selection stage a recoverable ground truth:

- informative features are opcode counts organized in correlated pairs,
  each pair drawing a shared class-dependent Poisson component plus a
  per-member unique component;
- robust pairs are never touched by any transform (their columns are
  bit-identical before and after);
- fragile pairs are wired into the feature-corrupting strategies so that
  every such strategy destroys exactly one member of each pair: the
  surviving partner inherits the pair's shared signal, which keeps the
  lost importance inside the fragile set instead of drifting onto robust
  features;
- when the fragile count is odd, the leftover fragile feature shares its
  signal with a robust partner and is destroyed by all corrupting
  strategies (that robust partner absorbs the drift and is sacrificed);
- noise features carry no class signal; flag-kind noise features give the
  flag-oriented strategies (reflection, manifest-style) something to
  perturb without touching the planted signal.

Renaming and member reordering leave feature columns byte-identical, so
their measured accuracy impact is exactly zero under the paired
evaluation protocol used by the selection stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .callgraph import CallGraph, GraphNode
from .dataset import (
    KIND_API,
    KIND_OPCODE,
    KIND_PERMISSION,
    FamilyLabelMap,
    FeatureSchema,
    LabeledFeatureDataset,
)
from .errors import ValidationError
from .rng import derive_seed, rng_for
from .selection import NON_TRIVIAL_STRATEGIES, TRIVIAL_STRATEGIES, get_strategy

# strategies that destroy fragile feature columns
KILLER_STRATEGIES = ("junk-code", "control-flow", "string-encrypt")

#: default condition set emitted by the generator pipeline
DEFAULT_STRATEGIES = NON_TRIVIAL_STRATEGIES

PLATFORM_PREFIXES = ("Landroid/", "Ljava/", "Lcom/google/")

SENSITIVE_POOL = (
    "Landroid/telephony/TelephonyManager;->getDeviceId()Ljava/lang/String;",
    "Landroid/telephony/SmsManager;->sendTextMessage(Ljava/lang/String;Ljava/lang/String;Ljava/lang/String;Landroid/app/PendingIntent;Landroid/app/PendingIntent;)V",
    "Landroid/location/LocationManager;->getLastKnownLocation(Ljava/lang/String;)Landroid/location/Location;",
    "Landroid/content/ContentResolver;->query(Landroid/net/Uri;[Ljava/lang/String;Ljava/lang/String;[Ljava/lang/String;Ljava/lang/String;)Landroid/database/Cursor;",
    "Ljava/net/HttpURLConnection;->connect()V",
    "Landroid/telephony/TelephonyManager;->getSubscriberId()Ljava/lang/String;",
    "Landroid/media/AudioRecord;->startRecording()V",
    "Landroid/hardware/Camera;->open()Landroid/hardware/Camera;",
    "Landroid/accounts/AccountManager;->getAccounts()[Landroid/accounts/Account;",
    "Landroid/net/wifi/WifiManager;->getConnectionInfo()Landroid/net/wifi/WifiInfo;",
    "Ljava/lang/Runtime;->exec(Ljava/lang/String;)Ljava/lang/Process;",
    "Landroid/content/pm/PackageManager;->getInstalledPackages(I)Ljava/util/List;",
    "Landroid/os/PowerManager$WakeLock;->acquire()V",
    "Landroid/telephony/TelephonyManager;->getSimSerialNumber()Ljava/lang/String;",
    "Landroid/app/ActivityManager;->getRunningServices(I)Ljava/util/List;",
    "Landroid/content/Context;->sendBroadcast(Landroid/content/Intent;)V",
)

REFLECTION_STUB_SIG = (
    "Ljava/lang/reflect/Method;->invoke(Ljava/lang/Object;"
    "[Ljava/lang/Object;)Ljava/lang/Object;"
)

# planted-signal constants (calibrated so the default corpus satisfies the
# recovery and reduction contracts; see tests/test_acceptance.py)
SHARED_RATE = 8.0
UNIQUE_RATE = 4.0
CLASS_SEP = 0.25
NOISE_OPCODE_RATE = 6.0
NOISE_API_P = 0.35
NOISE_PERM_P = 0.4
EDGE_RATE = 1.7
INFLATE_MAX = 120


@dataclass(frozen=True)
class GeneratorConfig:
    n_families: int = 2
    samples_per_family: int = 100
    dimension: int = 30
    fraction_robust_informative: float = 0.3
    fraction_fragile_informative: float = 0.3
    fraction_noise: float = 0.4
    graph_size_range: tuple[int, int] = (30, 60)
    sensitive_density: float = 0.05
    seed: int = 0

    def __post_init__(self):
        total = (
            self.fraction_robust_informative
            + self.fraction_fragile_informative
            + self.fraction_noise
        )
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"fractions sum to {total!r}, expected 1")
        lo, hi = self.graph_size_range
        if not (1 <= lo <= hi):
            raise ValidationError(f"bad graph_size_range {self.graph_size_range}")
        if not 0.0 < self.sensitive_density < 1.0:
            raise ValidationError(
                f"sensitive_density must be in (0,1), got {self.sensitive_density}"
            )
        if self.n_families < 1 or self.samples_per_family < 1:
            raise ValidationError("need at least one family and one sample")
        if self.dimension < 1:
            raise ValidationError("dimension must be >= 1")

    def to_json(self) -> dict:
        obj = self.__dict__.copy()
        obj["graph_size_range"] = list(self.graph_size_range)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "GeneratorConfig":
        obj = dict(obj)
        obj["graph_size_range"] = tuple(obj["graph_size_range"])
        return cls(**obj)


@dataclass
class GroundTruth:
    """Which feature indices are robust / fragile / noise, and why.

    ``pairs`` lists the correlated fragile pairs; ``mixed_pair`` is the
    (robust, fragile) pair created when the fragile count is odd.
    ``kill_sets`` records exactly which indices each strategy corrupts.
    Never read by the pipeline itself, only by tests and audits.
    """

    robust: list[int]
    fragile: list[int]
    noise: list[int]
    robust_pairs: list[tuple[int, int]] = field(default_factory=list)
    fragile_pairs: list[tuple[int, int]] = field(default_factory=list)
    mixed_pair: tuple[int, int] | None = None
    solo: list[int] = field(default_factory=list)
    noise_api: list[int] = field(default_factory=list)
    noise_perm: list[int] = field(default_factory=list)
    noise_opcode: list[int] = field(default_factory=list)
    kill_sets: dict[str, list[int]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "robust": self.robust,
            "fragile": self.fragile,
            "noise": self.noise,
            "robust_pairs": [list(p) for p in self.robust_pairs],
            "fragile_pairs": [list(p) for p in self.fragile_pairs],
            "mixed_pair": list(self.mixed_pair) if self.mixed_pair else None,
            "solo": self.solo,
            "noise_api": self.noise_api,
            "noise_perm": self.noise_perm,
            "noise_opcode": self.noise_opcode,
            "kill_sets": self.kill_sets,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        return cls(
            robust=obj["robust"],
            fragile=obj["fragile"],
            noise=obj["noise"],
            robust_pairs=[tuple(p) for p in obj["robust_pairs"]],
            fragile_pairs=[tuple(p) for p in obj["fragile_pairs"]],
            mixed_pair=tuple(obj["mixed_pair"]) if obj["mixed_pair"] else None,
            solo=obj["solo"],
            noise_api=obj["noise_api"],
            noise_perm=obj["noise_perm"],
            noise_opcode=obj["noise_opcode"],
            kill_sets={k: list(v) for k, v in obj["kill_sets"].items()},
        )


def build_ground_truth(cfg: GeneratorConfig) -> tuple[FeatureSchema, GroundTruth]:
    """Assign roles, kinds, pairings, and kill sets for one corpus."""
    d = cfg.dimension
    n_robust = round(d * cfg.fraction_robust_informative)
    n_fragile = round(d * cfg.fraction_fragile_informative)
    n_noise = d - n_robust - n_fragile
    if n_noise < 0:
        raise ValidationError("fractions leave no room for noise features")

    rng = rng_for(cfg.seed, "roles")
    order = [int(i) for i in rng.permutation(d)]
    robust = sorted(order[:n_robust])
    fragile = sorted(order[n_robust : n_robust + n_fragile])
    noise = sorted(order[n_robust + n_fragile :])

    # informative features are opcode counts; noise cycles through kinds so
    # flag-oriented transforms have something to perturb
    kinds = [KIND_OPCODE] * d
    noise_api: list[int] = []
    noise_perm: list[int] = []
    noise_opcode: list[int] = []
    for pos, i in enumerate(noise):
        kind = (KIND_OPCODE, KIND_API, KIND_PERMISSION)[pos % 3]
        kinds[i] = kind
        (noise_opcode, noise_api, noise_perm)[pos % 3].append(i)

    prefix = {KIND_OPCODE: "op", KIND_API: "api", KIND_PERMISSION: "perm"}
    names = tuple(f"{prefix[kinds[i]]}_{i:03d}" for i in range(d))
    schema = FeatureSchema(names, tuple(kinds))

    robust_pairs = [
        (robust[2 * i], robust[2 * i + 1]) for i in range(len(robust) // 2)
    ]
    fragile_pairs = [
        (fragile[2 * i], fragile[2 * i + 1]) for i in range(len(fragile) // 2)
    ]
    leftover_robust = robust[-1] if len(robust) % 2 else None
    leftover_fragile = fragile[-1] if len(fragile) % 2 else None
    mixed = None
    solo: list[int] = []
    if leftover_robust is not None and leftover_fragile is not None:
        mixed = (leftover_robust, leftover_fragile)
    else:
        if leftover_robust is not None:
            solo.append(leftover_robust)
        if leftover_fragile is not None:
            solo.append(leftover_fragile)

    # every corrupting strategy destroys exactly one member of each fragile
    # pair (alternating so both members are covered) plus the mixed-pair
    # fragile member
    kill_sets: dict[str, list[int]] = {}
    for k, strat in enumerate(KILLER_STRATEGIES):
        kills: list[int] = []
        for p, (a, b) in enumerate(fragile_pairs):
            kills.append(a if (p + k) % 2 == 0 else b)
        if mixed is not None:
            kills.append(mixed[1])
        if leftover_fragile is not None and mixed is None:
            kills.append(leftover_fragile)
        kill_sets[strat] = sorted(kills)
    kill_sets["reflection"] = list(noise_api)
    for strat in TRIVIAL_STRATEGIES:
        kill_sets[strat] = list(noise_perm)
    for strat in ("member-reorder", "identifier-rename", "class-rename"):
        kill_sets[strat] = []

    return schema, GroundTruth(
        robust=robust,
        fragile=fragile,
        noise=noise,
        robust_pairs=robust_pairs,
        fragile_pairs=fragile_pairs,
        mixed_pair=mixed,
        solo=solo,
        noise_api=noise_api,
        noise_perm=noise_perm,
        noise_opcode=noise_opcode,
        kill_sets=kill_sets,
    )


def _family_rate(family: int, n_families: int) -> float:
    if n_families == 1:
        return 1.0
    spread = 2.0 * family / (n_families - 1) - 1.0
    return 1.0 + CLASS_SEP * spread


def _sample_row(
    schema: FeatureSchema,
    gt: GroundTruth,
    family: int,
    n_families: int,
    rng: np.random.Generator,
) -> dict[int, float]:
    rate = _family_rate(family, n_families)
    row: dict[int, float] = {}
    all_pairs = gt.robust_pairs + gt.fragile_pairs
    if gt.mixed_pair is not None:
        all_pairs = all_pairs + [gt.mixed_pair]
    for a, b in all_pairs:
        z = rng.poisson(SHARED_RATE * rate)
        row[a] = float(z + rng.poisson(UNIQUE_RATE * rate))
        row[b] = float(z + rng.poisson(UNIQUE_RATE * rate))
    for i in gt.solo:
        row[i] = float(rng.poisson((SHARED_RATE + UNIQUE_RATE) * rate))
    for i in gt.noise_opcode:
        row[i] = float(rng.poisson(NOISE_OPCODE_RATE))
    for i in gt.noise_api:
        row[i] = float(rng.random() < NOISE_API_P)
    for i in gt.noise_perm:
        row[i] = float(rng.random() < NOISE_PERM_P)
    return row


def _build_graph_topology(
    cfg: GeneratorConfig, family: int, rng: np.random.Generator
) -> tuple[int, list[int], set[tuple[int, int]], list[str]]:
    lo, hi = cfg.graph_size_range
    n = int(rng.integers(lo, hi + 1))
    n_sens = max(1, int(rng.binomial(n, cfg.sensitive_density)))
    n_sens = min(n_sens, n)
    sens_ids = sorted(int(i) for i in rng.choice(n, size=n_sens, replace=False))
    pool_idx = rng.choice(
        len(SENSITIVE_POOL), size=min(n_sens, len(SENSITIVE_POOL)), replace=False
    )
    sigs = [""] * n
    for k, node_id in enumerate(sens_ids):
        sigs[node_id] = SENSITIVE_POOL[int(pool_idx[k % len(pool_idx)])]
    app_counter = 0
    for i in range(n):
        if not sigs[i]:
            sigs[i] = f"Lapp/f{family}/C{app_counter};->run{app_counter}()V"
            app_counter += 1

    edges: set[tuple[int, int]] = set()
    for u in range(n):
        out = int(rng.poisson(EDGE_RATE))
        out = min(out, n - 1)
        if out == 0:
            continue
        targets = rng.choice(n, size=out, replace=False)
        for t in targets:
            t = int(t)
            if t != u:
                edges.add((u, t))

    # family-flavored local structure around each sensitive node
    non_sens = [i for i in range(n) if i not in set(sens_ids)]
    pattern = family % 3
    for s in sens_ids:
        if len(non_sens) < 2:
            break
        picks = rng.choice(len(non_sens), size=2, replace=False)
        a, b = non_sens[int(picks[0])], non_sens[int(picks[1])]
        if pattern == 0:
            edges.add((b, a))
            edges.add((a, s))
        elif pattern == 1:
            edges.add((a, s))
            edges.add((b, s))
        else:
            edges.add((s, a))
            edges.add((a, b))
            edges.add((b, s))
    return n, sens_ids, edges, sigs


def _distribute_row(
    row: dict[int, float],
    schema: FeatureSchema,
    n_nodes: int,
    rng: np.random.Generator,
) -> list[dict[int, float]]:
    """Spread a sample's feature row over its graph nodes.

    Counts are split multinomially; api flags land on one or two nodes;
    permission flags are app-level and stored on every node.
    """
    node_features: list[dict[int, float]] = [dict() for _ in range(n_nodes)]
    for i in sorted(row):
        value = row[i]
        kind = schema.kinds[i]
        if kind == KIND_OPCODE:
            if value <= 0:
                continue
            counts = rng.multinomial(int(value), [1.0 / n_nodes] * n_nodes)
            for node_id, c in enumerate(counts):
                if c > 0:
                    node_features[node_id][i] = float(c)
        elif kind == KIND_API:
            if value > 0:
                k = 2 if (rng.random() < 0.3 and n_nodes >= 2) else 1
                spots = rng.choice(n_nodes, size=k, replace=False)
                for node_id in spots:
                    node_features[int(node_id)][i] = 1.0
        else:  # permission: app-level broadcast
            if value > 0:
                for node_id in range(n_nodes):
                    node_features[node_id][i] = 1.0
    return node_features


def generate_sample(
    cfg: GeneratorConfig,
    schema: FeatureSchema,
    gt: GroundTruth,
    family: int,
    index: int,
) -> CallGraph:
    rng = rng_for(cfg.seed, "sample", family, index)
    n, sens_ids, edges, sigs = _build_graph_topology(cfg, family, rng)
    row = _sample_row(schema, gt, family, cfg.n_families, rng)
    node_features = _distribute_row(row, schema, n, rng)
    sens_set = set(sens_ids)
    nodes = [
        GraphNode(
            id=i, sig=sigs[i], sensitive=i in sens_set, features=node_features[i]
        )
        for i in range(n)
    ]
    return CallGraph(nodes=nodes, edges=sorted(edges), label=family)


@dataclass
class GeneratedCorpus:
    schema: FeatureSchema
    families: FamilyLabelMap
    graphs: list[CallGraph]  # family-major order, unobfuscated
    ground_truth: GroundTruth
    config: GeneratorConfig


def generate_corpus(cfg: GeneratorConfig) -> GeneratedCorpus:
    """Generate the unobfuscated corpus (graphs with planted features)."""
    schema, gt = build_ground_truth(cfg)
    families = FamilyLabelMap(
        tuple(f"family{c:02d}" for c in range(cfg.n_families))
    )
    graphs = [
        generate_sample(cfg, schema, gt, family, index)
        for family in range(cfg.n_families)
        for index in range(cfg.samples_per_family)
    ]
    return GeneratedCorpus(
        schema=schema,
        families=families,
        graphs=graphs,
        ground_truth=gt,
        config=cfg,
    )


def aggregate_features(g: CallGraph, schema: FeatureSchema) -> np.ndarray:
    """Sample-level feature row: counts sum over nodes, flags take the max."""
    row = np.zeros(schema.dimension, dtype=np.float64)
    for node in g.nodes:
        for i, v in node.features.items():
            if schema.is_flag(i):
                row[i] = max(row[i], v)
            else:
                row[i] += v
    return row


def graphs_to_dataset(
    graphs: list[CallGraph],
    schema: FeatureSchema,
    condition: str,
) -> LabeledFeatureDataset:
    X = np.stack([aggregate_features(g, schema) for g in graphs])
    y = np.array([g.label for g in graphs], dtype=np.int64)
    return LabeledFeatureDataset(schema, X, y, condition)


@dataclass(frozen=True)
class ObfuscationTransform:
    """One strategy instance with concrete targets and knobs."""

    strategy: str
    params: dict
    seed: int = 0

    def __post_init__(self):
        get_strategy(self.strategy)


def make_transforms(
    gt: GroundTruth,
    strategies: tuple[str, ...] = DEFAULT_STRATEGIES,
    seed: int = 0,
) -> dict[str, ObfuscationTransform]:
    """Instantiate transforms whose targets come from the ground truth."""
    transforms = {}
    for strat in strategies:
        get_strategy(strat)
        params: dict = {"target_dims": list(gt.kill_sets.get(strat, []))}
        if strat == "junk-code":
            params.update(
                junk_fraction=0.1,
                inflate_max=INFLATE_MAX,
                pad_dims=list(gt.noise_opcode),
            )
        elif strat == "control-flow":
            params.update(rewire_fraction=0.1, inflate_max=INFLATE_MAX)
        elif strat == "reflection":
            params.update(rewire_fraction=0.15)
        elif strat in TRIVIAL_STRATEGIES:
            params.update(add_probability=0.7)
        transforms[strat] = ObfuscationTransform(
            strategy=strat, params=params, seed=derive_seed(seed, "obf", strat)
        )
    return transforms


def apply_obfuscation(
    g: CallGraph, t: ObfuscationTransform, sample_key: int = 0
) -> CallGraph:
    """Apply one strategy to one sample; pure and seeded per sample.

    The sample's feature row is the aggregate of its node features, so
    callers re-derive condition rows with :func:`aggregate_features`.
    """
    strat = get_strategy(t.strategy)
    rng = rng_for(t.seed, "sample", sample_key)
    if t.strategy == "junk-code":
        return _apply_junk(g, t.params, rng)
    if t.strategy == "control-flow":
        return _apply_control_flow(g, t.params, rng)
    if t.strategy == "member-reorder":
        return _apply_member_reorder(g, rng)
    if t.strategy == "string-encrypt":
        return _apply_string_encrypt(g, t.params, rng)
    if t.strategy in ("identifier-rename", "class-rename"):
        return _apply_rename(g, t.strategy, rng)
    if t.strategy == "reflection":
        return _apply_reflection(g, t.params, rng)
    if strat.category == "trivial":
        return _apply_trivial(g, t.params, rng)
    raise ValidationError(f"no transform implemented for {t.strategy!r}")


def _copy_nodes(g: CallGraph) -> list[GraphNode]:
    return [replace(n, features=dict(n.features)) for n in g.nodes]


def _non_sensitive_ids(nodes: list[GraphNode]) -> list[int]:
    return [n.id for n in nodes if not n.sensitive]


def _inflate(
    nodes: list[GraphNode],
    candidate_ids: list[int],
    target_dims: list[int],
    inflate_max: int,
    rng: np.random.Generator,
) -> None:
    """Drown the class signal of target count columns with heavy noise."""
    if not candidate_ids or not target_dims:
        return
    by_id = {n.id: n for n in nodes}
    for dim in target_dims:
        extra = int(rng.integers(0, inflate_max + 1))
        if extra == 0:
            continue
        counts = rng.multinomial(
            extra, [1.0 / len(candidate_ids)] * len(candidate_ids)
        )
        for node_id, c in zip(candidate_ids, counts):
            if c > 0:
                feats = by_id[node_id].features
                feats[dim] = feats.get(dim, 0.0) + float(c)


def _apply_junk(g: CallGraph, params: dict, rng: np.random.Generator) -> CallGraph:
    nodes = _copy_nodes(g)
    edges = set(g.edges)
    n = len(nodes)
    if "junk_count" in params:
        k = int(params["junk_count"])
    else:
        k = max(1, round(params.get("junk_fraction", 0.1) * n))
    next_id = max((node.id for node in nodes), default=-1) + 1
    non_sens = _non_sensitive_ids(nodes)
    pad_dims = params.get("pad_dims", [])
    junk_ids = []
    for j in range(k):
        feats: dict[int, float] = {}
        if pad_dims:
            dim = pad_dims[int(rng.integers(len(pad_dims)))]
            feats[dim] = float(1 + rng.poisson(3))
        junk = GraphNode(
            id=next_id + j,
            sig=f"Lapp/obf/Junk{j};->fill{j}()V",
            sensitive=False,
            features=feats,
        )
        nodes.append(junk)
        junk_ids.append(junk.id)
        callers = non_sens + junk_ids[:-1]
        if callers:
            caller = callers[int(rng.integers(len(callers)))]
            edges.add((caller, junk.id))
    _inflate(
        nodes,
        non_sens + junk_ids,
        params.get("target_dims", []),
        params.get("inflate_max", INFLATE_MAX),
        rng,
    )
    return CallGraph(nodes=nodes, edges=sorted(edges), label=g.label)


def _apply_control_flow(
    g: CallGraph, params: dict, rng: np.random.Generator
) -> CallGraph:
    nodes = _copy_nodes(g)
    edges = list(g.edges)
    sens = {n.id for n in nodes if n.sensitive}
    non_sens = _non_sensitive_ids(nodes)
    candidates = [
        i for i, (u, v) in enumerate(edges) if u not in sens and v not in sens
    ]
    k = round(params.get("rewire_fraction", 0.1) * len(candidates))
    if k > 0 and len(non_sens) >= 2:
        chosen = sorted(
            int(i)
            for i in rng.choice(len(candidates), size=min(k, len(candidates)),
                                replace=False)
        )
        edge_set = set(edges)
        for ci in chosen:
            ei = candidates[ci]
            u, _ = edges[ei]
            for _attempt in range(8):
                v_new = non_sens[int(rng.integers(len(non_sens)))]
                if v_new != u and (u, v_new) not in edge_set:
                    edge_set.discard(edges[ei])
                    edges[ei] = (u, v_new)
                    edge_set.add((u, v_new))
                    break
        edges = sorted(set(edges))
    else:
        edges = sorted(set(edges))
    _inflate(nodes, _non_sensitive_ids(nodes), params.get("target_dims", []),
             params.get("inflate_max", INFLATE_MAX), rng)
    return CallGraph(nodes=nodes, edges=edges, label=g.label)


def _apply_member_reorder(g: CallGraph, rng: np.random.Generator) -> CallGraph:
    order = [int(i) for i in rng.permutation(len(g.nodes))]
    id_map = {g.nodes[old].id: new for new, old in enumerate(order)}
    nodes = [
        replace(g.nodes[old], id=new, features=dict(g.nodes[old].features))
        for new, old in enumerate(order)
    ]
    edges = sorted((id_map[u], id_map[v]) for u, v in g.edges)
    return CallGraph(nodes=nodes, edges=edges, label=g.label)


def _apply_string_encrypt(
    g: CallGraph, params: dict, rng: np.random.Generator
) -> CallGraph:
    targets = set(params.get("target_dims", []))
    nodes = []
    touched: list[int] = []
    for n in g.nodes:
        feats = {i: v for i, v in n.features.items() if i not in targets}
        if len(feats) != len(n.features):
            touched.append(n.id)
        nodes.append(replace(n, features=feats))
    edges = set(g.edges)
    stub_id = max((n.id for n in nodes), default=-1) + 1
    stub = GraphNode(
        id=stub_id,
        sig="Lapp/obf/StringStore;->decode(I)Ljava/lang/String;",
        sensitive=False,
        features={},
    )
    nodes.append(stub)
    callers = touched if touched else _non_sensitive_ids(nodes[:-1])
    if callers:
        k = min(3, len(callers))
        picks = rng.choice(len(callers), size=k, replace=False)
        for p in picks:
            edges.add((callers[int(p)], stub_id))
    return CallGraph(nodes=nodes, edges=sorted(edges), label=g.label)


def _split_sig(sig: str) -> tuple[str, str, str] | None:
    if ";->" not in sig:
        return None
    cls, rest = sig.split(";->", 1)
    paren = rest.find("(")
    if paren < 0:
        return None
    return cls, rest[:paren], rest[paren:]


def _apply_rename(g: CallGraph, strategy: str, rng: np.random.Generator) -> CallGraph:
    nodes = []
    for n in g.nodes:
        sig = n.sig
        if not sig.startswith(PLATFORM_PREFIXES):
            parts = _split_sig(sig)
            if parts is not None:
                cls, name, desc = parts
                if strategy == "identifier-rename":
                    name = f"m{int(rng.integers(16**6)):06x}"
                else:
                    cls = f"Lobf/p{int(rng.integers(16**4)):04x}/C{n.id}"
                sig = f"{cls};->{name}{desc}"
        nodes.append(replace(n, sig=sig, features=dict(n.features)))
    return CallGraph(nodes=nodes, edges=list(g.edges), label=g.label)


def _apply_reflection(
    g: CallGraph, params: dict, rng: np.random.Generator
) -> CallGraph:
    nodes = _copy_nodes(g)
    targets = set(params.get("target_dims", []))
    if targets:
        for n in nodes:
            for dim in list(n.features):
                if dim in targets:
                    del n.features[dim]
    sens = {n.id for n in nodes if n.sensitive}
    edges = set(g.edges)
    candidates = sorted(
        (u, v) for u, v in edges if u not in sens and v not in sens
    )
    k = round(params.get("rewire_fraction", 0.15) * len(candidates))
    if k > 0:
        stub_id = max((n.id for n in nodes), default=-1) + 1
        nodes.append(
            GraphNode(id=stub_id, sig=REFLECTION_STUB_SIG, sensitive=False,
                      features={})
        )
        picks = rng.choice(len(candidates), size=min(k, len(candidates)),
                           replace=False)
        for p in sorted(int(i) for i in picks):
            u, v = candidates[p]
            edges.discard((u, v))
            edges.add((u, stub_id))
            edges.add((stub_id, v))
    return CallGraph(nodes=nodes, edges=sorted(edges), label=g.label)


def _apply_trivial(g: CallGraph, params: dict, rng: np.random.Generator) -> CallGraph:
    nodes = _copy_nodes(g)
    for dim in params.get("target_dims", []):
        if rng.random() < params.get("add_probability", 0.7):
            for n in nodes:
                n.features[dim] = 1.0
    return CallGraph(nodes=nodes, edges=list(g.edges), label=g.label)


def obfuscated_graphs(
    corpus: GeneratedCorpus, transform: ObfuscationTransform
) -> list[CallGraph]:
    """Apply one transform to every sample of the corpus (paired mode)."""
    return [
        apply_obfuscation(g, transform, sample_key=i)
        for i, g in enumerate(corpus.graphs)
    ]


def toy_separable_corpus(
    n_per_family: int = 6,
    n_features: int = 4,
    seed: int = 0,
) -> tuple[list[CallGraph], FeatureSchema]:
    """Tiny two-family corpus that is linearly separable by node features."""
    names = tuple(f"op_{i:03d}" for i in range(n_features))
    schema = FeatureSchema(names, (KIND_OPCODE,) * n_features)
    graphs = []
    for family in range(2):
        for idx in range(n_per_family):
            rng = rng_for(seed, "toy", family, idx)
            n = int(rng.integers(4, 8))
            nodes = []
            for i in range(n):
                feats = {}
                for dim in range(n_features):
                    base = 12.0 if (dim % 2) == family else 1.0
                    feats[dim] = float(rng.poisson(base))
                nodes.append(
                    GraphNode(
                        id=i,
                        sig=(
                            SENSITIVE_POOL[0]
                            if i == 0
                            else f"Lapp/toy{family};->m{i}()V"
                        ),
                        sensitive=i == 0,
                        features=feats,
                    )
                )
            edges = {(i, (i + 1) % n) for i in range(n)}
            extra = int(rng.integers(0, n))
            for _ in range(extra):
                u = int(rng.integers(n))
                v = int(rng.integers(n))
                if u != v:
                    edges.add((u, v))
            graphs.append(CallGraph(nodes=nodes, edges=sorted(edges), label=family))
    return graphs, schema
