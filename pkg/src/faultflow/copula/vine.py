"""Regular vine copulas: sequential structure selection, density and Rosenblatt maps.

Conditional pseudo-observations are addressed by ``(variable, conditioning set)``.
An edge in tree ``t`` joins two nodes of tree ``t`` (variables for ``t = 1``,
edges of the previous tree otherwise) and carries a pair copula
``C(u_{a|D}, u_{b|D})`` for its conditioned pair ``(a, b)`` and
conditioning set ``D``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np
from scipy import stats

from ..ecdf import EmpiricalCDF
from .bivariate import BivariateCopula, fit_bivariate
from .families import clip

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class VineEdge:
    tree: int  # 1-based
    a: int
    b: int
    cond: frozenset
    children: tuple  # node ids in the previous tree (variables when tree == 1)
    copula: BivariateCopula

    @property
    def all_vars(self) -> frozenset:
        return self.cond | {self.a, self.b}

    def to_dict(self) -> dict:
        return {"tree": self.tree, "a": self.a, "b": self.b, "cond": sorted(self.cond),
                "children": list(self.children), "copula": self.copula.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "VineEdge":
        return cls(int(d["tree"]), int(d["a"]), int(d["b"]), frozenset(int(c) for c in d["cond"]),
                   tuple(int(c) for c in d["children"]), BivariateCopula.from_dict(d["copula"]))


def _key(var, cond) -> tuple:
    return (int(var), frozenset(cond))


def _edge_outputs(edge: VineEdge, pseudo: dict) -> None:
    """Add both conditional h-outputs of ``edge`` to ``pseudo``."""
    ua = pseudo[_key(edge.a, edge.cond)]
    ub = pseudo[_key(edge.b, edge.cond)]
    pseudo[_key(edge.a, edge.cond | {edge.b})] = edge.copula.hfunc2(ua, ub)
    pseudo[_key(edge.b, edge.cond | {edge.a})] = edge.copula.hfunc1(ua, ub)


@dataclass(frozen=True)
class _Chain:
    var: int
    steps: tuple  # ((edge, partner), ...) from tree 1 upward


def _sampling_chains(dim: int, trees: list[list[VineEdge]]) -> list[_Chain]:
    """Order variables so each one is conditioned on all earlier ones.

    Repeatedly peels a conditioned variable of the highest remaining edge,
    together with the one edge per tree that has it in its conditioned pair.
    """
    remaining = [list(t) for t in trees]
    alive = set(range(dim))
    peeled = []
    while len(alive) > 1:
        m = len(alive)
        top = remaining[m - 2][0]
        chosen = None
        for x in (top.a, top.b):
            steps = []
            ok = True
            for t in range(m - 1):
                hits = [e for e in remaining[t] if x in (e.a, e.b)]
                if len(hits) != 1:
                    ok = False
                    break
                e = hits[0]
                steps.append((e, e.b if e.a == x else e.a))
            if not ok:
                continue
            # the conditioning sets must grow by the previous partner at each tree
            for t in range(1, m - 1):
                prev_e, prev_y = steps[t - 1]
                if steps[t][0].cond != prev_e.cond | {prev_y}:
                    ok = False
            if ok:
                chosen = (x, steps)
                break
        if chosen is None:
            raise ValueError("vine structure cannot be ordered for sampling")
        x, steps = chosen
        peeled.append(_Chain(x, tuple(steps)))
        used = {id(e) for e, _ in steps}
        remaining = [[e for e in tr if id(e) not in used] for tr in remaining]
        alive.discard(x)
    peeled.append(_Chain(alive.pop(), ()))
    return peeled[::-1]


@dataclass
class VineModel:
    """Pair-copula construction on ``dim`` variables with optional empirical marginals."""

    dim: int
    trees: list  # trees[t] = list of VineEdge for tree t + 1
    marginals: list | None = None
    _chains: list = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.validate()
        self._chains = _sampling_chains(self.dim, self.trees)

    # -- structure ------------------------------------------------------
    @property
    def edges(self) -> list[VineEdge]:
        return [e for tr in self.trees for e in tr]

    @property
    def order(self) -> list[int]:
        """Variable order used by the Rosenblatt maps."""
        return [c.var for c in self._chains]

    def structure(self) -> list[list[tuple]]:
        """Per tree, the ``(a, b, conditioning tuple)`` of every edge."""
        return [[(e.a, e.b, tuple(sorted(e.cond))) for e in tr] for tr in self.trees]

    def validate(self) -> None:
        d = self.dim
        if d < 1 or len(self.trees) != max(d - 1, 0):
            raise ValueError("a vine on d variables has d - 1 trees")
        prev_all = [frozenset({i}) for i in range(d)]
        for t, tree in enumerate(self.trees, start=1):
            if len(tree) != d - t:
                raise ValueError(f"tree {t} must have {d - t} edges")
            g = nx.Graph()
            g.add_nodes_from(range(len(prev_all)))
            for e in tree:
                c1, c2 = e.children
                if t > 1 and not set(self.trees[t - 2][c1].children) & set(self.trees[t - 2][c2].children):
                    raise ValueError(f"proximity condition violated in tree {t}")
                union = prev_all[c1] | prev_all[c2]
                if union != e.all_vars or len(e.cond) != t - 1:
                    raise ValueError(f"inconsistent conditioned/conditioning sets in tree {t}")
                if (prev_all[c1] & prev_all[c2]) != e.cond:
                    raise ValueError(f"conditioning set mismatch in tree {t}")
                g.add_edge(c1, c2)
            if not nx.is_tree(g):
                raise ValueError(f"tree {t} is not a spanning tree")
            prev_all = [e.all_vars for e in tree]
        if self.marginals is not None and len(self.marginals) != d:
            raise ValueError("one marginal per dimension required")

    # -- transforms -----------------------------------------------------
    def _pseudo_from(self, uhat: np.ndarray) -> dict:
        pseudo = {_key(j, ()): uhat[:, j] for j in range(self.dim)}
        for tree in self.trees:
            for e in tree:
                _edge_outputs(e, pseudo)
        return pseudo

    def logpdf(self, u) -> np.ndarray:
        """Log copula density at rows of ``u`` (dependent uniforms)."""
        u = clip(np.atleast_2d(u))
        pseudo = {_key(j, ()): u[:, j] for j in range(self.dim)}
        out = np.zeros(u.shape[0])
        for tree in self.trees:
            for e in tree:
                out += e.copula.logpdf(pseudo[_key(e.a, e.cond)], pseudo[_key(e.b, e.cond)])
                _edge_outputs(e, pseudo)
        return out

    def pdf(self, u) -> np.ndarray:
        return np.exp(self.logpdf(u))

    def loglik(self, u) -> float:
        return float(np.sum(self.logpdf(u)))

    @property
    def n_params(self) -> int:
        return sum(e.copula.n_params for e in self.edges)

    def aic(self, u) -> float:
        return -2.0 * self.loglik(u) + 2.0 * self.n_params

    def rosenblatt(self, uhat) -> np.ndarray:
        """Dependent uniforms to independent ones, columns in variable index order.

        Column ``order[k]`` of the output is the conditional CDF of that
        variable given the ``k`` variables preceding it in :attr:`order`.
        """
        uhat = clip(np.atleast_2d(uhat))
        pseudo = self._pseudo_from(uhat)
        out = np.empty_like(uhat)
        seen: set = set()
        for c in self._chains:
            out[:, c.var] = pseudo[_key(c.var, seen)]
            seen.add(c.var)
        return out

    def inverse_rosenblatt(self, u) -> np.ndarray:
        """Independent uniforms to dependent ones (inverse of :meth:`rosenblatt`)."""
        u = clip(np.atleast_2d(u))
        pseudo: dict = {}
        out = np.empty_like(u)
        for c in self._chains:
            x = c.var
            w = u[:, x]
            # walk down from the full conditioning set to the unconditional value
            for e, y in reversed(c.steps):
                partner = pseudo[_key(y, e.cond)]
                w = e.copula.hinv2(w, partner) if e.a == x else e.copula.hinv1(w, partner)
                pseudo[_key(x, e.cond)] = w
            pseudo[_key(x, ())] = w
            out[:, x] = w
            for e, y in c.steps:
                ux, uy = pseudo[_key(x, e.cond)], pseudo[_key(y, e.cond)]
                if e.a == x:
                    pseudo[_key(x, e.cond | {y})] = e.copula.hfunc2(ux, uy)
                    pseudo[_key(y, e.cond | {x})] = e.copula.hfunc1(ux, uy)
                else:
                    pseudo[_key(x, e.cond | {y})] = e.copula.hfunc1(uy, ux)
                    pseudo[_key(y, e.cond | {x})] = e.copula.hfunc2(uy, ux)
        return out

    def simulate(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.inverse_rosenblatt(rng.uniform(size=(n, self.dim)))

    def sample_y(self, u) -> np.ndarray:
        """Map independent uniforms to variables on the data scale via the marginals."""
        if self.marginals is None:
            raise ValueError("vine has no marginals attached")
        uhat = self.inverse_rosenblatt(u)
        return np.column_stack([m.ppf(uhat[:, j]) for j, m in enumerate(self.marginals)])

    def to_uniform(self, y) -> np.ndarray:
        if self.marginals is None:
            raise ValueError("vine has no marginals attached")
        y = np.atleast_2d(y)
        return np.column_stack([m.cdf(y[:, j]) for j, m in enumerate(self.marginals)])

    # -- persistence ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "VineModel",
            "dim": self.dim,
            "trees": [[e.to_dict() for e in tr] for tr in self.trees],
            "marginals": None if self.marginals is None
            else [m.sorted_values.tolist() for m in self.marginals],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VineModel":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported vine schema {d.get('schema_version')}")
        trees = [[VineEdge.from_dict(e) for e in tr] for tr in d["trees"]]
        margs = None if d["marginals"] is None else [EmpiricalCDF(np.asarray(m)) for m in d["marginals"]]
        return cls(int(d["dim"]), trees, margs)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "VineModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def independence_vine(dim: int, marginals=None) -> VineModel:
    """D-vine on ``0 - 1 - ... - dim-1`` with independence copulas everywhere."""
    return dvine(dim, [[None] * (dim - t) for t in range(1, dim)], marginals)


def dvine(dim: int, copulas, marginals=None) -> VineModel:
    """D-vine on the path ``0 - 1 - ... - dim-1``; ``copulas[t][k]`` sits on edge ``k`` of tree ``t + 1``.

    ``None`` entries become independence copulas.
    """
    trees = []
    prev_all = [frozenset({i}) for i in range(dim)]
    for t in range(1, dim):
        tree = []
        for k in range(dim - t):
            c1, c2 = k, k + 1
            a_set, b_set = prev_all[c1], prev_all[c2]
            (a,), (b,) = tuple(a_set - b_set), tuple(b_set - a_set)
            cop = copulas[t - 1][k] or BivariateCopula()
            tree.append(VineEdge(t, a, b, a_set & b_set, (c1, c2), cop))
        trees.append(tree)
        prev_all = [e.all_vars for e in tree]
    return VineModel(dim, trees, marginals)


def pseudo_observations(y: np.ndarray) -> np.ndarray:
    """Column-wise ranks scaled to (0, 1) as ``rank / (n + 1)`` (ties averaged)."""
    y = np.asarray(y, dtype=float)
    return stats.rankdata(y, axis=0) / (y.shape[0] + 1)


def _kendall(x, y) -> float:
    t = stats.kendalltau(x, y)[0]
    return 0.0 if not np.isfinite(t) else float(t)


def fit_vine(
    u: np.ndarray,
    marginals=None,
    families=None,
    structure: str = "auto",
    alpha: float = 0.05,
    checkerboard: bool = True,
) -> VineModel:
    """Sequential vine estimation on uniform data ``u`` (n x d).

    Each tree is a maximum spanning tree on absolute Kendall's tau among the
    pairs allowed by the proximity condition; pair copulas are fitted with
    :func:`fit_bivariate` and their h-outputs feed the next tree.
    ``structure="dvine"`` fixes the first tree to the path ``0 - 1 - ... - d-1``;
    ``"auto"`` fits both and keeps the one with the lower AIC.
    """
    u = clip(np.asarray(u, dtype=float))
    n, d = u.shape
    if d < 2:
        raise ValueError("a vine needs at least two dimensions")
    if structure not in ("rvine", "dvine", "auto"):
        raise ValueError(f"unknown structure {structure!r}")
    if structure == "auto":
        fits = [fit_vine(u, marginals, families, s, alpha, checkerboard) for s in ("rvine", "dvine")]
        return min(fits, key=lambda m: m.aic(u))
    pseudo = {_key(j, ()): u[:, j] for j in range(d)}

    nodes_all = [frozenset({j}) for j in range(d)]
    nodes_children = [None] * d
    trees: list[list[VineEdge]] = []
    for t in range(1, d):
        g = nx.Graph()
        g.add_nodes_from(range(len(nodes_all)))
        for i in range(len(nodes_all)):
            for j in range(i + 1, len(nodes_all)):
                if t == 1:
                    if structure == "dvine" and j != i + 1:
                        continue
                elif not set(nodes_children[i]) & set(nodes_children[j]):
                    continue
                shared = nodes_all[i] & nodes_all[j]
                (a,), (b,) = tuple(nodes_all[i] - shared), tuple(nodes_all[j] - shared)
                tau = _kendall(pseudo[_key(a, shared)], pseudo[_key(b, shared)])
                g.add_edge(i, j, weight=abs(tau), a=a, b=b, cond=shared)
        mst = nx.maximum_spanning_tree(g, weight="weight", algorithm="kruskal")
        tree = []
        for i, j in sorted(tuple(sorted(e)) for e in mst.edges()):
            data = g.edges[i, j]
            a, b, cond = data["a"], data["b"], data["cond"]
            cop = fit_bivariate(pseudo[_key(a, cond)], pseudo[_key(b, cond)], families=families,
                                alpha=alpha, checkerboard=checkerboard)
            edge = VineEdge(t, a, b, cond, (i, j), cop)
            _edge_outputs(edge, pseudo)
            tree.append(edge)
        trees.append(tree)
        nodes_all = [e.all_vars for e in tree]
        nodes_children = [e.children for e in tree]
    return VineModel(d, trees, marginals)


def fit_vine_to_data(y: np.ndarray, **kwargs) -> VineModel:
    """Empirical marginals plus a vine fitted to the rank pseudo-observations of ``y``."""
    y = np.asarray(y, dtype=float)
    marginals = [EmpiricalCDF(y[:, j]) for j in range(y.shape[1])]
    return fit_vine(pseudo_observations(y), marginals=marginals, **kwargs)
