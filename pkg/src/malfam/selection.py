"""Dynamic weighted feature selection.

Features are scored by their importance on unobfuscated data minus an
impact-weighted penalty for how much their importance drifts under each
obfuscation strategy; indices whose composite score strictly exceeds a
threshold are selected.

The scoring fold is implemented in plain Python floats, in a documented
order (strategies sorted by id, sums accumulated left to right), so an
independent straight-line recomputation from the stored per-condition
importances and accuracies reproduces scores and selection bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import (
    UNOBFUSCATED,
    LabeledFeatureDataset,
    SplitSpec,
    split_dataset,
)
from .errors import ValidationError
from .fileio import read_json, write_json_atomic
from .forest import (
    ForestConfig,
    evaluate_accuracy,
    feature_importances,
    train_forest,
)

TRIVIAL = "trivial"
NON_TRIVIAL = "non-trivial"


@dataclass(frozen=True)
class ObfuscationStrategy:
    """One obfuscation strategy tag and its taxonomy class."""

    id: str
    category: str

    def __post_init__(self):
        if self.category not in (TRIVIAL, NON_TRIVIAL):
            raise ValidationError(f"unknown strategy class {self.category!r}")


STRATEGIES: dict[str, ObfuscationStrategy] = {
    s.id: s
    for s in (
        ObfuscationStrategy("repackaging", TRIVIAL),
        ObfuscationStrategy("reassembly", TRIVIAL),
        ObfuscationStrategy("manifest", TRIVIAL),
        ObfuscationStrategy("alignment", TRIVIAL),
        ObfuscationStrategy("junk-code", NON_TRIVIAL),
        ObfuscationStrategy("control-flow", NON_TRIVIAL),
        ObfuscationStrategy("member-reorder", NON_TRIVIAL),
        ObfuscationStrategy("string-encrypt", NON_TRIVIAL),
        ObfuscationStrategy("identifier-rename", NON_TRIVIAL),
        ObfuscationStrategy("class-rename", NON_TRIVIAL),
        ObfuscationStrategy("reflection", NON_TRIVIAL),
    )
}

TRIVIAL_STRATEGIES = tuple(
    s.id for s in STRATEGIES.values() if s.category == TRIVIAL
)
NON_TRIVIAL_STRATEGIES = tuple(
    s.id for s in STRATEGIES.values() if s.category == NON_TRIVIAL
)


def get_strategy(strategy_id: str) -> ObfuscationStrategy:
    try:
        return STRATEGIES[strategy_id]
    except KeyError:
        raise ValidationError(f"unknown obfuscation strategy {strategy_id!r}") from None


@dataclass(frozen=True)
class DwfsConfig:
    """Knobs for one selection run.

    ``beta`` balances importance against stability; ``theta`` is the
    selection threshold (None resolves to the 75th percentile of the
    scores). ``alpha_bar_source`` picks whether the mean impact feeding
    the weights is taken over normalized impacts (the default, which
    makes it exactly 1/m) or over raw clamped impacts.
    """

    beta: float = 0.5
    theta: float | None = None
    forest: ForestConfig = field(default_factory=ForestConfig)
    eval_split: SplitSpec = field(default_factory=SplitSpec)
    alpha_bar_source: str = "normalized"

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValidationError(f"beta must be in [0,1], got {self.beta}")
        if self.alpha_bar_source not in ("normalized", "raw"):
            raise ValidationError(
                f"alpha_bar_source must be 'normalized' or 'raw', "
                f"got {self.alpha_bar_source!r}"
            )

    def to_json(self) -> dict:
        return {
            "beta": self.beta,
            "theta": self.theta,
            "forest": self.forest.to_json(),
            "eval_split": {
                "train_fraction": self.eval_split.train_fraction,
                "seed": self.eval_split.seed,
                "stratified": self.eval_split.stratified,
            },
            "alpha_bar_source": self.alpha_bar_source,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DwfsConfig":
        return cls(
            beta=obj["beta"],
            theta=obj["theta"],
            forest=ForestConfig.from_json(obj["forest"]),
            eval_split=SplitSpec(**obj["eval_split"]),
            alpha_bar_source=obj["alpha_bar_source"],
        )


def impact_factor(acc_unobf: float, acc_obf: float) -> float:
    """Relative accuracy drop (acc_unobf - acc_obf) / acc_unobf.

    Negative values (obfuscation helping) pass through; they are clamped
    later, at normalization.
    """
    if acc_unobf == 0:
        raise ValidationError("impact factor undefined: baseline accuracy is 0")
    return (acc_unobf - acc_obf) / acc_unobf


def normalize_impacts(alphas: list[float]) -> list[float]:
    """Clamp negatives to 0, then L1-normalize; all-zero falls back to 1/m."""
    if not alphas:
        raise ValidationError("normalize_impacts needs at least one impact")
    clamped = [a if a > 0.0 else 0.0 for a in alphas]
    total = 0.0
    for a in clamped:
        total += a
    if total > 0.0:
        return [a / total for a in clamped]
    return [1.0 / len(alphas)] * len(alphas)


def stability_delta(
    importances: list[float],
    obf_importances: dict[str, list[float]],
    alpha_norm: dict[str, float],
) -> list[float]:
    """Impact-weighted sum of absolute importance changes per feature."""
    if set(obf_importances) != set(alpha_norm):
        raise ValidationError("impact keys do not match importance keys")
    dim = len(importances)
    for name, vec in obf_importances.items():
        if len(vec) != dim:
            raise ValidationError(
                f"importance vector for {name!r} has length {len(vec)}, "
                f"expected {dim}"
            )
    delta = [0.0] * dim
    for name in sorted(obf_importances):
        a = alpha_norm[name]
        vec = obf_importances[name]
        for i in range(dim):
            delta[i] += a * abs(importances[i] - vec[i])
    return delta


def mean_impact(alphas: list[float]) -> float:
    """Plain mean over the m impacts (exactly 1/m for normalized input)."""
    if not alphas:
        raise ValidationError("mean_impact needs at least one impact")
    total = 0.0
    for a in alphas:
        total += a
    return total / len(alphas)


def weights(beta: float, alpha_bar: float) -> tuple[float, float]:
    """Importance weight 1 - beta*alpha_bar and stability weight beta*alpha_bar."""
    w2 = beta * alpha_bar
    return 1.0 - w2, w2


def composite_scores(
    importances: list[float], delta: list[float], w1: float, w2: float
) -> list[float]:
    """Per-feature score w1*I_i - w2*delta_i."""
    if len(importances) != len(delta):
        raise ValidationError(
            f"importances length {len(importances)} != delta length {len(delta)}"
        )
    return [w1 * importances[i] - w2 * delta[i] for i in range(len(importances))]


def select_features(scores: list[float], theta: float) -> list[int]:
    """Indices with score strictly greater than theta, ascending."""
    return [i for i, s in enumerate(scores) if s > theta]


def percentile_linear(values: list[float], q: float) -> float:
    """Linear-interpolation percentile over sorted values.

    pos = q/100 * (n-1); result = v[floor(pos)] + frac * (v[floor+1] -
    v[floor]). This formula is the selection threshold contract, stated
    here so independent recomputations can match it exactly.
    """
    if not values:
        raise ValidationError("percentile of an empty score vector")
    v = sorted(values)
    if len(v) == 1:
        return v[0]
    pos = (q / 100.0) * (len(v) - 1)
    lo = int(math.floor(pos))
    if lo >= len(v) - 1:
        return v[-1]
    frac = pos - lo
    return v[lo] + frac * (v[lo + 1] - v[lo])


THETA_RULE_DEFAULT = "p75"


@dataclass
class StrategyOutcome:
    """Per-strategy training results feeding the stability penalty."""

    importances: list[float]
    accuracy: float
    alpha_raw: float
    alpha_norm: float

    def to_json(self) -> dict:
        return {
            "importances": self.importances,
            "accuracy": self.accuracy,
            "alpha_raw": self.alpha_raw,
            "alpha_norm": self.alpha_norm,
        }


@dataclass
class DwfsResult:
    """Everything the selection run produced, plus its run manifest."""

    importances: list[float]
    accuracy_unobf: float
    per_strategy: dict[str, StrategyOutcome]
    delta: list[float]
    alpha_bar: float
    w1: float
    w2: float
    scores: list[float]
    theta: float
    selected: list[int]
    manifest: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "version": 1,
            "importances": self.importances,
            "accuracy_unobf": self.accuracy_unobf,
            "per_strategy": {
                name: s.to_json() for name, s in sorted(self.per_strategy.items())
            },
            "delta": self.delta,
            "alpha_bar": self.alpha_bar,
            "w1": self.w1,
            "w2": self.w2,
            "scores": self.scores,
            "theta": self.theta,
            "selected": self.selected,
            "manifest": self.manifest,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DwfsResult":
        if obj.get("version") != 1:
            raise ValidationError(f"unsupported result version {obj.get('version')}")
        per = {
            name: StrategyOutcome(**payload)
            for name, payload in obj["per_strategy"].items()
        }
        return cls(
            importances=obj["importances"],
            accuracy_unobf=obj["accuracy_unobf"],
            per_strategy=per,
            delta=obj["delta"],
            alpha_bar=obj["alpha_bar"],
            w1=obj["w1"],
            w2=obj["w2"],
            scores=obj["scores"],
            theta=obj["theta"],
            selected=obj["selected"],
            manifest=obj.get("manifest", {}),
        )


def save_result(result: DwfsResult, path: Path | str) -> None:
    write_json_atomic(path, result.to_json())


def load_result(path: Path | str) -> DwfsResult:
    return DwfsResult.from_json(read_json(path))


def _condition_profile(
    ds: LabeledFeatureDataset, cfg: DwfsConfig
) -> tuple[list[float], float]:
    """Train on the split's train half, report held-out accuracy.

    The same split and forest seeds are reused for every condition so a
    feature-identical condition (e.g. renaming) reproduces the baseline
    model exactly and its impact factor is exactly zero.
    """
    train, test = split_dataset(ds, cfg.eval_split)
    model = train_forest(train, cfg.forest)
    acc = evaluate_accuracy(model, test)
    profile = feature_importances(model)
    return profile.importances, acc


def run_dwfs(
    corpus: dict[str, LabeledFeatureDataset], cfg: DwfsConfig
) -> DwfsResult:
    """Score every feature and select the ones above the threshold.

    ``corpus`` maps condition names to datasets and must contain
    ``unobfuscated``; the remaining keys are obfuscation strategy ids.
    With ``beta == 0`` the obfuscated conditions are ignored entirely
    (the stability penalty has zero weight), so they may be omitted.
    """
    if UNOBFUSCATED not in corpus:
        raise ValidationError("corpus has no 'unobfuscated' condition")
    strategy_names = sorted(k for k in corpus if k != UNOBFUSCATED)
    if cfg.beta > 0 and not strategy_names:
        raise ValidationError("corpus has no obfuscated conditions")

    importances, acc_unobf = _condition_profile(corpus[UNOBFUSCATED], cfg)
    dim = len(importances)

    per_strategy: dict[str, StrategyOutcome] = {}
    if cfg.beta > 0:
        alphas_raw: list[float] = []
        obf_importances: dict[str, list[float]] = {}
        for name in strategy_names:
            obf_imp, acc = _condition_profile(corpus[name], cfg)
            alpha = impact_factor(acc_unobf, acc)
            alphas_raw.append(alpha)
            obf_importances[name] = obf_imp
            per_strategy[name] = StrategyOutcome(
                importances=obf_imp, accuracy=acc, alpha_raw=alpha, alpha_norm=0.0
            )
        alphas_norm = normalize_impacts(alphas_raw)
        alpha_by_name = dict(zip(strategy_names, alphas_norm))
        for name in strategy_names:
            per_strategy[name].alpha_norm = alpha_by_name[name]
        delta = stability_delta(importances, obf_importances, alpha_by_name)
        if cfg.alpha_bar_source == "normalized":
            alpha_bar = mean_impact(alphas_norm)
        else:
            alpha_bar = min(1.0, max(0.0, mean_impact(alphas_raw)))
    else:
        delta = [0.0] * dim
        alpha_bar = 0.0

    w1, w2 = weights(cfg.beta, alpha_bar)
    scores = composite_scores(importances, delta, w1, w2)
    theta = cfg.theta if cfg.theta is not None else percentile_linear(scores, 75.0)
    selected = select_features(scores, theta)

    manifest = {
        "config": cfg.to_json(),
        "theta_rule": "explicit" if cfg.theta is not None else THETA_RULE_DEFAULT,
        "dimension": dim,
        "conditions": {
            UNOBFUSCATED: {
                "rows": corpus[UNOBFUSCATED].n_rows,
                "accuracy": acc_unobf,
            },
            **{
                name: {
                    "rows": corpus[name].n_rows,
                    "accuracy": per_strategy[name].accuracy,
                }
                for name in strategy_names
                if name in per_strategy
            },
        },
        "skipped_conditions": strategy_names if cfg.beta == 0 else [],
        "selected_count": len(selected),
    }
    return DwfsResult(
        importances=importances,
        accuracy_unobf=acc_unobf,
        per_strategy=per_strategy,
        delta=delta,
        alpha_bar=alpha_bar,
        w1=w1,
        w2=w2,
        scores=scores,
        theta=theta,
        selected=selected,
        manifest=manifest,
    )
