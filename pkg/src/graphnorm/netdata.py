"""Multi-view graph populations: data model, file I/O, folds and simulation.

A sample's views are stored as one array of shape (n_r, n_r, n_v) so that
``views[i, j]`` is directly the cross-view edge vector of connection (i, j).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._validation import InvalidGraphError, check_view


class DatasetError(ValueError):
    pass


@dataclass
class MultiViewSample:
    subject_id: str
    views: np.ndarray
    label: str = ""

    def __post_init__(self):
        views = np.asarray(self.views, dtype=np.float64)
        if views.ndim != 3 or views.shape[0] != views.shape[1]:
            raise InvalidGraphError(f"{self.subject_id}: views must have shape (n_r, n_r, n_v), got {views.shape}")
        for v in range(views.shape[2]):
            check_view(views[:, :, v], where=f"subject {self.subject_id}, view {v}")
        self.views = views

    @property
    def n_r(self) -> int:
        return self.views.shape[0]

    @property
    def n_v(self) -> int:
        return self.views.shape[2]

    def view(self, v: int) -> np.ndarray:
        return self.views[:, :, v]


@dataclass
class Population:
    samples: list[MultiViewSample]
    view_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.samples = list(self.samples)
        if self.samples:
            shapes = {s.views.shape for s in self.samples}
            if len(shapes) > 1:
                raise DatasetError(f"samples disagree on (n_r, n_r, n_v): {sorted(shapes)}")
            ids = [s.subject_id for s in self.samples]
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            if dupes:
                raise DatasetError(f"duplicate subject_id: {dupes[0]}")
        if not self.view_names and self.samples:
            self.view_names = [f"view_{v}" for v in range(self.n_v)]
        if self.samples and len(self.view_names) != self.n_v:
            raise DatasetError(f"{len(self.view_names)} view names for {self.n_v} views")

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, idx):
        return self.samples[idx]

    @property
    def n_r(self) -> int:
        return self.samples[0].n_r

    @property
    def n_v(self) -> int:
        return self.samples[0].n_v

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.samples]

    @property
    def subject_ids(self) -> list[str]:
        return [s.subject_id for s in self.samples]

    def tensor(self, indices: Sequence[int] | None = None) -> np.ndarray:
        """Stack samples into shape (n_samples, n_r, n_r, n_v)."""
        chosen = self.samples if indices is None else [self.samples[i] for i in indices]
        return np.stack([s.views for s in chosen])

    def subset(self, indices: Sequence[int]) -> "Population":
        return Population([self.samples[i] for i in indices], list(self.view_names))


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: tuple[int, ...]

    def test_indices(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f == fold]

    def train_indices(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f != fold]

    def sizes(self) -> list[int]:
        return [self.assignment.count(f) for f in range(self.k)]


@dataclass
class SyntheticSpec:
    """Recipe for a simulated population.

    Each view's prototype is a dissimilarity network ``|m_i - m_j|`` over a
    nodal measurement ``m`` that mixes a component shared by all views
    (weight ``shared_fraction``) with a view-specific one, rescaled so its
    off-diagonal mean equals ``view_means[v]``. Subjects add symmetric
    Gaussian edge noise of standard deviation ``noise_scale * view_means[v]``.
    ``planted_edges`` are shifted by ``planted_offset * view_means[v]`` in
    every view of the prototype; ``planted_nodes`` instead shift the nodal
    measurement itself by ``planted_node_shift``, which changes every edge of
    those nodes the way a regional difference would. ``prototype_seed`` (default: ``seed``) lets
    two populations share a prototype while drawing distinct subjects.
    """

    n_subjects: int = 20
    n_r: int = 35
    n_v: int = 4
    view_means: list[float] = field(default_factory=lambda: [0.084, 0.723, 0.3, 0.15])
    view_max: list[float] = field(default_factory=lambda: [0.586, 3.740, 1.5, 0.8])
    noise_scale: float = 0.3
    seed: int = 0
    shared_fraction: float = 0.5
    label: str = "A"
    planted_edges: list[tuple[int, int]] = field(default_factory=list)
    planted_offset: float = 0.0
    planted_nodes: list[int] = field(default_factory=list)
    planted_node_shift: float = 0.0
    prototype_seed: int | None = None

    def validate(self) -> None:
        if self.n_subjects < 2:
            raise ValueError(f"n_subjects must be >= 2, got {self.n_subjects}")
        if self.n_r < 2 or self.n_v < 1:
            raise ValueError(f"n_r must be >= 2 and n_v >= 1, got n_r={self.n_r}, n_v={self.n_v}")
        if len(self.view_means) != self.n_v or len(self.view_max) != self.n_v:
            raise ValueError("view_means and view_max need one entry per view")
        for v, (mu, top) in enumerate(zip(self.view_means, self.view_max)):
            if not 0 < mu < top:
                raise ValueError(f"view {v}: need 0 < view_means < view_max, got {mu} and {top}")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")
        if not 0 <= self.shared_fraction <= 1:
            raise ValueError("shared_fraction must lie in [0, 1]")
        for i, j in self.planted_edges:
            if not (0 <= i < self.n_r and 0 <= j < self.n_r) or i == j:
                raise ValueError(f"invalid planted edge ({i}, {j})")
        for r in self.planted_nodes:
            if not 0 <= r < self.n_r:
                raise ValueError(f"invalid planted node {r}")


def cross_view_features(sample: MultiViewSample, i: int, j: int) -> np.ndarray:
    if i == j:
        raise ValueError(f"({i}, {j}) is a diagonal entry, not a connection")
    if not (0 <= i < sample.n_r and 0 <= j < sample.n_r):
        raise IndexError(f"node index out of range for n_r={sample.n_r}: ({i}, {j})")
    return sample.views[i, j].copy()


def _prototype(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    shared = rng.uniform(size=spec.n_r)
    proto = np.empty((spec.n_r, spec.n_r, spec.n_v))
    off = ~np.eye(spec.n_r, dtype=bool)
    for v in range(spec.n_v):
        m = spec.shared_fraction * shared + (1 - spec.shared_fraction) * rng.uniform(size=spec.n_r)
        unit = spec.view_means[v] / np.abs(m[:, None] - m[None, :])[off].mean()
        m[spec.planted_nodes] += spec.planted_node_shift
        proto[:, :, v] = np.abs(m[:, None] - m[None, :]) * unit
    for i, j in spec.planted_edges:
        bump = spec.planted_offset * np.asarray(spec.view_means)
        proto[i, j] += bump
        proto[j, i] += bump
    return proto


def simulate_population(spec: SyntheticSpec) -> Population:
    spec.validate()
    proto_seed = spec.seed if spec.prototype_seed is None else spec.prototype_seed
    proto = _prototype(spec, np.random.default_rng(proto_seed))
    rng = np.random.default_rng([spec.seed, 1])
    iu = np.triu_indices(spec.n_r, k=1)
    means = np.asarray(spec.view_means)
    tops = np.asarray(spec.view_max)
    samples = []
    for s in range(spec.n_subjects):
        views = np.zeros_like(proto)
        noise = rng.normal(size=(len(iu[0]), spec.n_v)) * (spec.noise_scale * means)
        upper = np.clip(proto[iu] + noise, 0.0, tops)
        views[iu] = upper
        views[iu[1], iu[0]] = upper
        samples.append(MultiViewSample(f"{spec.label}{s:03d}", views, spec.label))
    return Population(samples, [f"view_{v}" for v in range(spec.n_v)])


def split_folds(population: Population | Sequence[str], k: int, seed: int = 0) -> FoldAssignment:
    """Stratified k-fold assignment.

    Subjects are shuffled within each label, the label groups are laid end to
    end, and folds are dealt round-robin along that order. Fold sizes
    therefore differ by at most one and each label is spread evenly.
    """
    labels = population.labels if isinstance(population, Population) else list(population)
    n = len(labels)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k={k} folds exceeds {n} subjects")
    rng = np.random.default_rng(seed)
    order: list[int] = []
    for lab in sorted(set(labels)):
        members = np.array([i for i, x in enumerate(labels) if x == lab])
        order.extend(members[rng.permutation(len(members))].tolist())
    assignment = [0] * n
    for pos, idx in enumerate(order):
        assignment[idx] = pos % k
    return FoldAssignment(k, tuple(assignment))


# -- file format --------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_matrix_csv(path: Path, matrix: np.ndarray) -> None:
    lines = [",".join(_fmt(x) for x in row) for row in np.asarray(matrix, dtype=np.float64)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_csv(path: Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"missing file: {path}")
    rows = [line for line in path.read_text().splitlines() if line.strip()]
    try:
        data = [[float(x) for x in line.split(",")] for line in rows]
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None
    widths = {len(r) for r in data}
    if len(widths) > 1:
        raise DatasetError(f"{path}: ragged rows with widths {sorted(widths)}")
    return np.array(data, dtype=np.float64).reshape(len(data), -1)


def save_dataset(population: Population, path) -> None:
    if len(population) == 0:
        raise DatasetError("population must contain >= 1 sample")
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "n_r": population.n_r,
        "n_v": population.n_v,
        "view_names": list(population.view_names),
        "subjects": [{"id": s.subject_id, "label": s.label} for s in population.samples],
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    for s in population.samples:
        sub = root / "subjects" / s.subject_id
        sub.mkdir(parents=True, exist_ok=True)
        for v in range(s.n_v):
            write_matrix_csv(sub / f"view_{v}.csv", s.view(v))


def load_dataset(path) -> Population:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DatasetError(f"missing file: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    try:
        n_r, n_v = int(manifest["n_r"]), int(manifest["n_v"])
        subjects = manifest["subjects"]
    except KeyError as exc:
        raise DatasetError(f"manifest.json lacks key {exc}") from None
    view_names = manifest.get("view_names") or [f"view_{v}" for v in range(n_v)]
    seen: set[str] = set()
    samples = []
    for entry in subjects:
        sid = str(entry["id"])
        if sid in seen:
            raise DatasetError(f"duplicate subject_id: {sid}")
        seen.add(sid)
        views = np.empty((n_r, n_r, n_v))
        for v in range(n_v):
            f = root / "subjects" / sid / f"view_{v}.csv"
            m = read_matrix_csv(f)
            if m.shape != (n_r, n_r):
                raise DatasetError(f"{f}: dimension mismatch, expected {n_r}x{n_r}, got {m.shape[0]}x{m.shape[1]}")
            try:
                check_view(m, where=f"subject {sid}, view {v}")
            except InvalidGraphError as exc:
                raise DatasetError(str(exc)) from None
            views[:, :, v] = m
        samples.append(MultiViewSample(sid, views, str(entry.get("label", ""))))
    return Population(samples, list(view_names))
