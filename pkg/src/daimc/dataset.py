"""Multi-view data container, presence masks, synthetic data and CSV I/O."""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConstraintViolationError, FormatError, InvalidInputError

MAX_RATE = 0.5


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MultiViewDataset:
    """Views sized ``d_i x N`` sharing the instance axis.

    ``indicator`` is the ``n_v x N`` 0/1 presence matrix; columns of a view
    that are marked missing are stored as zeros.
    """

    views: tuple
    indicator: np.ndarray
    labels: np.ndarray | None = None
    names: tuple = field(default=())

    def __post_init__(self):
        views = tuple(_frozen(v) for v in self.views)
        if not views:
            raise InvalidInputError("dataset needs at least one view")
        for i, v in enumerate(views):
            if v.ndim != 2 or v.shape[0] < 1:
                raise InvalidInputError(f"view {i} must be a non-empty 2-D matrix")
            if not np.all(np.isfinite(v)):
                raise InvalidInputError(f"view {i} has non-finite entries")
        n = views[0].shape[1]
        bad = [i for i, v in enumerate(views) if v.shape[1] != n]
        if bad:
            raise InvalidInputError(f"views {bad} do not have {n} columns")
        if n < 2:
            raise InvalidInputError("need at least 2 instances")
        ind = _frozen(self.indicator, dtype=np.int8)
        if ind.shape != (len(views), n):
            raise InvalidInputError(
                f"indicator shape {ind.shape} != ({len(views)}, {n})")
        if not np.all((ind == 0) | (ind == 1)):
            raise InvalidInputError("indicator entries must be 0 or 1")
        uncovered = np.flatnonzero(ind.sum(axis=0) == 0)
        if uncovered.size:
            raise InvalidInputError(
                f"instances {uncovered[:10].tolist()} are missing from every view")
        labels = self.labels
        if labels is not None:
            labels = _frozen(labels, dtype=np.int64)
            if labels.shape != (n,):
                raise InvalidInputError(f"labels must have length {n}")
        names = tuple(self.names) or tuple(f"view{i + 1}" for i in range(len(views)))
        if len(names) != len(views):
            raise InvalidInputError("one name per view required")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "indicator", ind)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "names", names)

    @property
    def n_views(self):
        return len(self.views)

    @property
    def n_instances(self):
        return self.views[0].shape[1]

    @property
    def dims(self):
        return [v.shape[0] for v in self.views]

    @property
    def is_complete(self):
        return bool(np.all(self.indicator == 1))

    def mask(self, view):
        return self.indicator[view].astype(bool)

    def masked_view(self, view):
        """View ``view`` with missing columns forced to zero, whatever is stored."""
        return np.where(self.mask(view)[None, :], self.views[view], 0.0)

    def check_rank(self, k):
        counts = self.indicator.sum(axis=1)
        short = np.flatnonzero(counts < k + 1)
        if short.size:
            raise InvalidInputError(
                f"views {short.tolist()} keep fewer than k+1={k + 1} instances")

    def select_views(self, views):
        """Sub-dataset on the given views; instances left uncovered are dropped.

        Returns ``(dataset, kept)`` where ``kept`` indexes the original instances.
        """
        views = list(views)
        ind = self.indicator[views]
        kept = np.flatnonzero(ind.sum(axis=0) > 0)
        return MultiViewDataset(
            views=[self.views[i][:, kept] for i in views],
            indicator=ind[:, kept],
            labels=None if self.labels is None else self.labels[kept],
            names=[self.names[i] for i in views],
        ), kept

    def with_indicator(self, indicator):
        indicator = np.asarray(indicator)
        views = [np.where(indicator[i][None, :] == 1, v, 0.0)
                 for i, v in enumerate(self.views)]
        return MultiViewDataset(views, indicator, self.labels, self.names)


def build_weight_matrix(indicator, view):
    """Diagonal ``N x N`` weight matrix with ``W_jj = M[view, j]``."""
    indicator = np.asarray(indicator)
    if not 0 <= view < indicator.shape[0]:
        raise InvalidInputError(f"view {view} out of range [0, {indicator.shape[0]})")
    return np.diag(indicator[view].astype(float))


def n_removed(rate, n):
    """Half-up rounding of ``rate * n``."""
    return int(math.floor(rate * n + 0.5))


def _anchored_mask(n_views, n, m, rng):
    # every instance keeps a balanced, random "anchor" view
    ind = np.ones((n_views, n), dtype=np.int8)
    anchor = np.empty(n, dtype=np.int64)
    anchor[rng.permutation(n)] = np.arange(n) % n_views
    for v in range(n_views):
        ind[v, rng.choice(np.flatnonzero(anchor != v), size=m, replace=False)] = 0
    return ind


def _mix_swaps(ind, rng, n_steps):
    """Random in-view swaps of a removed and a present instance.

    Proposals are symmetric and moves that would uncover an instance are
    rejected, so the chain targets the uniform law on covering masks.
    """
    n_views, n = ind.shape
    cover = ind.sum(axis=0).astype(np.int64)
    views = rng.integers(n_views, size=n_steps)
    picks = rng.random((n_steps, 2))
    for v, (a, b) in zip(views, picks):
        removed = np.flatnonzero(ind[v] == 0)
        present = np.flatnonzero(ind[v] == 1)
        r = removed[int(a * removed.size)]
        p = present[int(b * present.size)]
        if cover[p] < 2:
            continue
        ind[v, r], ind[v, p] = 1, 0
        cover[r] += 1
        cover[p] -= 1
    return ind


def incomplete_indicator(n_views, n, rate, seed, max_attempts=1000):
    """Presence mask removing ``round(rate*n)`` uniformly chosen instances per view.

    Draws are redrawn until every instance is present in at least one view.
    When ``max_attempts`` draws all fail but a covering mask exists, the
    same conditional law is sampled by a swap chain started from a feasible
    mask.
    """
    if not 0.0 <= rate <= MAX_RATE:
        raise InvalidInputError(f"rate {rate} outside [0, {MAX_RATE}]")
    m = n_removed(rate, n)
    if m == 0:
        return np.ones((n_views, n), dtype=np.int8)
    if n_views * (n - m) < n:
        raise ConstraintViolationError(
            f"removing {m} of {n} instances from each of {n_views} views "
            "cannot keep every instance in some view")
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        ind = np.ones((n_views, n), dtype=np.int8)
        for v in range(n_views):
            ind[v, rng.permutation(n)[:m]] = 0
        if ind.sum(axis=0).min() > 0:
            return ind
    ind = _anchored_mask(n_views, n, m, rng)
    return _mix_swaps(ind, rng, 20 * n * n_views)


def apply_incomplete_rate(ds, rate, seed):
    if not 0.0 <= rate <= MAX_RATE:
        raise InvalidInputError(f"rate {rate} outside [0, {MAX_RATE}]")
    if not ds.is_complete:
        raise InvalidInputError("dataset is already incomplete")
    return ds.with_indicator(
        incomplete_indicator(ds.n_views, ds.n_instances, rate, seed))


def synth_planted(n_per_cluster, k_clusters, n_views, dims, separation,
                  noise_sd, seed):
    """Gaussian blobs around per-view random centers, shared labels."""
    dims = list(dims)
    if len(dims) != n_views or n_views < 1:
        raise InvalidInputError("dims must list one size per view")
    if any(d < 1 for d in dims):
        raise InvalidInputError("every view needs at least one feature")
    if k_clusters < 2 or n_per_cluster < 1:
        raise InvalidInputError("need k_clusters >= 2 and n_per_cluster >= 1")
    if separation <= 0 or noise_sd < 0:
        raise InvalidInputError("separation must be > 0 and noise_sd >= 0")
    rng = np.random.default_rng(seed)
    n = n_per_cluster * k_clusters
    labels = rng.permutation(np.repeat(np.arange(k_clusters), n_per_cluster))
    views = []
    for d in dims:
        centers = rng.uniform(0.0, separation, size=(d, k_clusters))
        views.append(centers[:, labels] + noise_sd * rng.standard_normal((d, n)))
    return MultiViewDataset(views, np.ones((n_views, n), dtype=np.int8), labels)


# --- manifest I/O -----------------------------------------------------------

def _read_matrix(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                try:
                    rows.append([float(tok) for tok in line.split(",")])
                except ValueError as exc:
                    raise FormatError(f"{path}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path}: empty matrix file")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise FormatError(f"{path}: ragged rows (widths {sorted(widths)})")
    return np.array(rows, dtype=float)


def write_matrix(path, a):
    np.savetxt(path, np.asarray(a, dtype=float), fmt="%.17g", delimiter=",")


def load_manifest(path):
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if not isinstance(spec, dict) or not spec.get("views"):
        raise FormatError(f"{path}: manifest needs a non-empty 'views' list")
    base = path.parent
    views, masks, names = [], [], []
    for i, entry in enumerate(spec["views"]):
        x = _read_matrix(base / entry["path"])
        nan = np.isnan(x)
        missing = nan.all(axis=0)
        partial = nan & ~missing[None, :]
        if partial.any():
            r, c = np.argwhere(partial)[0]
            raise FormatError(
                f"view {i} ({entry['path']}): NaN at row {r}, column {c} "
                "inside a present column")
        if np.isinf(x).any():
            raise FormatError(f"view {i} ({entry['path']}): infinite value")
        x[:, missing] = 0.0
        views.append(x)
        masks.append(~missing)
        names.append(entry.get("name", f"view{i + 1}"))
    ns = [v.shape[1] for v in views]
    if len(set(ns)) != 1:
        detail = ", ".join(f"{nm}: {n}" for nm, n in zip(names, ns))
        raise FormatError(f"views disagree on instance count ({detail})")
    labels = None
    if spec.get("labels"):
        lines = [ln.strip() for ln in (base / spec["labels"]).read_text().splitlines()]
        lines = [ln for ln in lines if ln]
        try:
            labels = np.array([int(ln) for ln in lines], dtype=np.int64)
        except ValueError as exc:
            raise FormatError(f"labels file: {exc}") from exc
        if labels.size != ns[0]:
            raise FormatError(
                f"labels file has {labels.size} entries, expected {ns[0]}")
    try:
        return MultiViewDataset(views, np.array(masks, dtype=np.int8), labels, names)
    except InvalidInputError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_manifest(ds, directory, name="manifest.json"):
    """Write ``ds`` as per-view CSVs (missing columns as ``nan``) plus a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (x, nm) in enumerate(zip(ds.views, ds.names)):
        fname = f"view{i + 1}.csv"
        out = np.array(x, dtype=float)
        out[:, ~ds.mask(i)] = np.nan
        write_matrix(directory / fname, out)
        entries.append({"path": fname, "name": nm})
    manifest = {"views": entries}
    if ds.labels is not None:
        (directory / "labels.csv").write_text(
            "".join(f"{int(c)}\n" for c in ds.labels))
        manifest["labels"] = "labels.csv"
    target = directory / name
    target.write_text(json.dumps(manifest, indent=2) + "\n")
    return target
