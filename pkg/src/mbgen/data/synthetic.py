"""Planted-structure synthetic multi-behavior logs.

Each user walks a Markov chain over (behavior, item cluster):

    b_t ~ T[b_{t-1}]                    behavior chain
    c_t ~ M[b_t][c_{t-1}]               behavior-specific cluster transition
    v_t ~ w[b_t] restricted to c_t      behavior-specific popularity inside a cluster

The first state is drawn from the stationary distribution of the joint
(behavior, cluster) chain, so every position of every sequence is stationary
and the Bayes-optimal accuracies can be computed exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import BehaviorVocab, InteractionDataset, UserSequence

DEFAULT_BEHAVIORS = ("click", "cart", "fav", "buy")


@dataclass
class SyntheticSpec:
    n_items: int
    n_behaviors: int
    n_users: int
    min_len: int
    max_len: int
    transition: np.ndarray            # [B, B]
    n_clusters: int
    item_cluster: np.ndarray          # [V]
    cluster_transition: np.ndarray    # [B, C, C]
    item_weights: np.ndarray          # [B, V], sums to 1 inside every (behavior, cluster)
    centroids: np.ndarray             # [C, feature_dim]
    feature_noise: float = 0.1
    seed: int = 0
    behavior_names: tuple[str, ...] = ()
    target_behavior: int = 0

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.item_cluster = np.asarray(self.item_cluster, dtype=np.int64)
        self.cluster_transition = np.asarray(self.cluster_transition, dtype=np.float64)
        self.item_weights = np.asarray(self.item_weights, dtype=np.float64)
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if not self.behavior_names:
            self.behavior_names = (DEFAULT_BEHAVIORS[: self.n_behaviors] if self.n_behaviors <= 4
                                   else tuple(f"b{i}" for i in range(self.n_behaviors)))
        self.behavior_names = tuple(self.behavior_names)
        self.validate()

    @property
    def feature_dim(self) -> int:
        return self.centroids.shape[1]

    def validate(self) -> None:
        B, C, V = self.n_behaviors, self.n_clusters, self.n_items
        if self.transition.shape != (B, B):
            raise ValueError(f"transition must be {B}x{B}, got {self.transition.shape}")
        if not np.allclose(self.transition.sum(axis=1), 1.0) or np.any(self.transition < 0):
            raise ValueError("rows of the behavior transition matrix must be distributions")
        if self.item_cluster.shape != (V,) or self.item_cluster.min() < 0 or self.item_cluster.max() >= C:
            raise ValueError("item_cluster must assign every item to a cluster in [0, n_clusters)")
        sizes = np.bincount(self.item_cluster, minlength=C)
        if np.any(sizes == 0):
            raise ValueError(f"degenerate spec: clusters {np.nonzero(sizes == 0)[0].tolist()} are empty")
        if self.cluster_transition.shape != (B, C, C):
            raise ValueError(f"cluster_transition must be {B}x{C}x{C}")
        if not np.allclose(self.cluster_transition.sum(axis=2), 1.0) or np.any(self.cluster_transition < 0):
            raise ValueError("cluster transition rows must be distributions")
        if self.item_weights.shape != (B, V) or np.any(self.item_weights < 0):
            raise ValueError(f"item_weights must be non-negative with shape {(B, V)}")
        for b in range(B):
            per_cluster = np.bincount(self.item_cluster, weights=self.item_weights[b], minlength=C)
            if not np.allclose(per_cluster, 1.0):
                raise ValueError(f"item weights of behavior {b} do not sum to 1 inside every cluster")
        if self.centroids.shape[0] != C:
            raise ValueError("need one centroid per cluster")
        if not 1 <= self.min_len <= self.max_len or self.min_len < 3:
            raise ValueError("need 3 <= min_len <= max_len")
        if len(self.behavior_names) != B:
            raise ValueError("behavior_names length must equal n_behaviors")
        if not 0 <= self.target_behavior < B:
            raise ValueError("target_behavior out of range")

    def item_kernel(self, behavior: int, prev_cluster: int) -> np.ndarray:
        """Distribution of the next item given its behavior and the previous item's cluster."""
        return self.cluster_transition[behavior, prev_cluster][self.item_cluster] * self.item_weights[behavior]

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        d["behavior_names"] = list(self.behavior_names)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(**{**d, "behavior_names": tuple(d.get("behavior_names", ()))})

    @classmethod
    def from_json(cls, text: str) -> "SyntheticSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class BayesReference:
    """Accuracies of the generator's own optimal predictor."""

    next_behavior_accuracy: float
    behavior_specific_hr: dict[int, float]
    target_behavior_hr: dict[int, float]
    behavior_item_hr: dict[int, float]
    stationary_behavior: list[float]
    uniform_hr: dict[int, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "BayesReference":
        d = json.loads(text)
        for k in ("behavior_specific_hr", "target_behavior_hr", "behavior_item_hr", "uniform_hr"):
            d[k] = {int(a): b for a, b in d.get(k, {}).items()}
        return cls(**d)


def default_transition(n_behaviors: int, max_row_prob: float = 0.8) -> np.ndarray:
    """A chain skewed toward behavior 0: it keeps most of its own mass and
    every other behavior either repeats or falls back to behavior 0."""
    B = n_behaviors
    if B == 1:
        return np.ones((1, 1))
    T = np.zeros((B, B))
    T[0, 0] = max_row_prob
    T[0, 1:] = (1 - max_row_prob) / (B - 1)
    for b in range(1, B):
        stay = max_row_prob * 0.75
        T[b, b] = stay
        T[b, 0] = (1 - stay) * 0.75
        rest = [j for j in range(1, B) if j != b]
        if rest:
            T[b, rest] = (1 - stay) * 0.25 / len(rest)
        else:
            T[b, 0] += (1 - stay) * 0.25
    return T


def planted_spec(n_items: int = 512, n_behaviors: int = 4, n_users: int = 2000, n_clusters: int = 16,
                 min_len: int = 8, max_len: int = 20, transition: np.ndarray | None = None,
                 max_row_prob: float = 0.8, cluster_stay=None, zipf=None, feature_dim: int = 32,
                 feature_noise: float = 0.1, super_clusters: int = 4, seed: int = 0,
                 target_behavior: int | None = None) -> SyntheticSpec:
    """Build a spec from a few knobs.

    ``cluster_stay[b]`` is the probability that behavior ``b`` moves to the
    behavior's preferred successor of the previous cluster (otherwise the next
    cluster is uniform). ``zipf[b]`` is the popularity exponent inside a
    cluster. Centroids are hierarchical: ``super_clusters`` coarse centers,
    each with finer cluster offsets around it.
    """
    rng = np.random.default_rng(seed)
    B, C, V = n_behaviors, n_clusters, n_items
    if V < C:
        raise ValueError("need at least one item per cluster")
    T = default_transition(B, max_row_prob) if transition is None else np.asarray(transition, float)
    stay = np.broadcast_to(np.asarray(0.8 if cluster_stay is None else cluster_stay, float), (B,))
    expo = np.broadcast_to(np.asarray(1.0 if zipf is None else zipf, float), (B,))

    item_cluster = rng.permutation(np.arange(V) % C)
    M = np.empty((B, C, C))
    for b in range(B):
        succ = rng.permutation(C)
        M[b] = (1 - stay[b]) / C
        M[b, np.arange(C), succ] += stay[b]
    W = np.zeros((B, V))
    for b in range(B):
        for c in range(C):
            members = np.nonzero(item_cluster == c)[0]
            order = rng.permutation(members)
            w = (np.arange(1, len(order) + 1, dtype=float)) ** (-expo[b])
            W[b, order] = w / w.sum()

    n_super = max(1, min(super_clusters, C))
    coarse = rng.normal(scale=4.0, size=(n_super, feature_dim))
    centroids = coarse[np.arange(C) % n_super] + rng.normal(scale=1.5, size=(C, feature_dim))
    return SyntheticSpec(
        n_items=V, n_behaviors=B, n_users=n_users, min_len=min_len, max_len=max_len,
        transition=T, n_clusters=C, item_cluster=item_cluster, cluster_transition=M,
        item_weights=W, centroids=centroids, feature_noise=feature_noise, seed=seed,
        target_behavior=B - 1 if target_behavior is None else target_behavior,
    )


def joint_stationary(spec: SyntheticSpec) -> np.ndarray:
    """Stationary distribution of the (behavior, cluster) chain, shape [B, C]."""
    B, C = spec.n_behaviors, spec.n_clusters
    # P[(b,c) -> (b',c')] = T[b,b'] * M[b'][c,c']
    P = np.einsum("ab,bcd->acbd", spec.transition, spec.cluster_transition).reshape(B * C, B * C)
    vals, vecs = np.linalg.eig(P.T)
    k = int(np.argmin(np.abs(vals - 1.0)))
    pi = np.abs(np.real(vecs[:, k]))
    pi /= pi.sum()
    # refine with a few power steps; the chain may be periodic-free but close eigenvalues hurt eig
    for _ in range(50):
        pi = pi @ P
    return pi.reshape(B, C) / pi.sum()


def bayes_reference(spec: SyntheticSpec, ks=(5, 10)) -> BayesReference:
    pi = joint_stationary(spec)
    T = spec.transition
    pb = pi.sum(axis=1)
    acc = float(np.sum(pb * T.max(axis=1)))
    B, C, V = spec.n_behaviors, spec.n_clusters, spec.n_items
    kmax = max(ks)
    # topk_cond[b', c, k] = mass of the k most likely items given next behavior b' and previous cluster c
    top_cond = np.zeros((B, C, kmax))
    for bn in range(B):
        for c in range(C):
            p = np.sort(spec.item_kernel(bn, c))[::-1][:kmax]
            top_cond[bn, c, : len(p)] = np.cumsum(p)
            top_cond[bn, c, len(p):] = top_cond[bn, c, len(p) - 1]
    # weight of (prev cluster c, next behavior b') = sum_b pi[b, c] T[b, b']
    w_next = np.einsum("bc,bd->dc", pi, T)
    spec_hr = {k: float(np.sum(w_next * top_cond[:, :, k - 1])) for k in ks}
    tgt = spec.target_behavior
    wt = w_next[tgt]
    tgt_hr = {k: float(np.sum(wt * top_cond[tgt, :, k - 1]) / wt.sum()) if wt.sum() > 0 else 0.0
              for k in ks}
    joint_hr = {k: 0.0 for k in ks}
    for b in range(B):
        for c in range(C):
            if pi[b, c] == 0:
                continue
            joint = np.concatenate([T[b, bn] * spec.item_kernel(bn, c) for bn in range(B)])
            top = np.sort(joint)[::-1][:kmax]
            for k in ks:
                joint_hr[k] += float(pi[b, c]) * float(top[:k].sum())
    return BayesReference(acc, spec_hr, tgt_hr, joint_hr, pb.tolist(),
                          uniform_hr={k: min(1.0, k / V) for k in ks})


def generate_synthetic(spec: SyntheticSpec) -> tuple[InteractionDataset, np.ndarray, BayesReference]:
    """Sample a dataset, its item features and the generator's Bayes reference."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    B, C, V = spec.n_behaviors, spec.n_clusters, spec.n_items
    pi = joint_stationary(spec).reshape(-1)
    cum_pi = np.cumsum(pi)
    cum_T = np.cumsum(spec.transition, axis=1)
    cum_M = np.cumsum(spec.cluster_transition, axis=2)
    members = [np.nonzero(spec.item_cluster == c)[0] for c in range(C)]
    cum_W = [[np.cumsum(spec.item_weights[b, members[c]]) for c in range(C)] for b in range(B)]

    def draw(cum, u):
        return min(int(np.searchsorted(cum, u * cum[-1], side="right")), len(cum) - 1)

    users = []
    lengths = rng.integers(spec.min_len, spec.max_len + 1, size=spec.n_users)
    for uid, n in enumerate(lengths):
        u = rng.random(3 * n)
        s = draw(cum_pi, u[0])
        b, c = divmod(s, C)
        items = np.empty(n, dtype=np.int64)
        behs = np.empty(n, dtype=np.int64)
        for t in range(n):
            if t > 0:
                b = draw(cum_T[b], u[3 * t])
                c = draw(cum_M[b, c], u[3 * t + 1])
            items[t] = members[c][draw(cum_W[b][c], u[3 * t + 2])]
            behs[t] = b
        users.append(UserSequence(f"u{uid}", items, behs, np.arange(1, n + 1, dtype=np.int64)))

    vocab = BehaviorVocab(spec.behavior_names, spec.target_behavior)
    ds = InteractionDataset(users, [f"i{v}" for v in range(V)], vocab)
    feats = spec.centroids[spec.item_cluster] + rng.normal(scale=spec.feature_noise,
                                                           size=(V, spec.feature_dim))
    return ds, feats, bayes_reference(spec)
