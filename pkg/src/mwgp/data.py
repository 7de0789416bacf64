"""Rating ingestion into a sparse triple store, k-fold splits and centering."""
import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import EmptyDataset, InvalidK, ParseError

FORMATS = ("movielens-dat", "csv", "jester", "movielens-tsv")
JESTER_MISSING = 99.0


class RatingTriple(NamedTuple):
    user: int
    item: int
    rating: float


@dataclass
class Dataset:
    """Observed (user, item, rating) triples with dense 0-based indices.

    ``user_ids[i]`` / ``item_ids[j]`` give the raw id of dense index i / j.
    Subsets produced by ``subset`` keep the full index space of the parent.
    """

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    num_users: int
    num_items: int
    user_ids: list = field(default_factory=list)
    item_ids: list = field(default_factory=list)

    def __len__(self):
        return int(self.users.shape[0])

    @property
    def triples(self):
        return [RatingTriple(int(u), int(i), float(y)) for u, i, y in zip(self.users, self.items, self.ratings)]

    @property
    def user_id_map(self):
        return {raw: k for k, raw in enumerate(self.user_ids)}

    @property
    def item_id_map(self):
        return {raw: k for k, raw in enumerate(self.item_ids)}

    def subset(self, index):
        return Dataset(
            self.users[index], self.items[index], self.ratings[index],
            self.num_users, self.num_items, self.user_ids, self.item_ids,
        )

    def with_ratings(self, ratings):
        return Dataset(self.users, self.items, np.asarray(ratings, dtype=np.float64),
                       self.num_users, self.num_items, self.user_ids, self.item_ids)

    @classmethod
    def from_arrays(cls, users, items, ratings, num_users=None, num_items=None):
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        I = int(num_users if num_users is not None else (users.max() + 1 if users.size else 0))
        J = int(num_items if num_items is not None else (items.max() + 1 if items.size else 0))
        return cls(users, items, np.asarray(ratings, dtype=np.float64), I, J,
                   [str(k) for k in range(I)], [str(k) for k in range(J)])


def from_records(raw_users, raw_items, ratings, warn_duplicates=True):
    """Dense re-indexing in order of first appearance; duplicate pairs keep the last rating."""
    user_index, item_index = {}, {}
    users = np.fromiter((user_index.setdefault(u, len(user_index)) for u in raw_users), np.int64, len(raw_users))
    items = np.fromiter((item_index.setdefault(i, len(item_index)) for i in raw_items), np.int64, len(raw_items))
    ratings = np.asarray(ratings, dtype=np.float64)
    if users.size == 0:
        raise EmptyDataset("no ratings found")

    key = users * len(item_index) + items
    # last occurrence wins: unique on the reversed array
    _, first_rev = np.unique(key[::-1], return_index=True)
    if first_rev.size != key.size:
        if warn_duplicates:
            warnings.warn(f"{key.size - first_rev.size} duplicate (user, item) records; keeping last")
        keep = np.sort(key.size - 1 - first_rev)
        users, items, ratings = users[keep], items[keep], ratings[keep]
    return Dataset(users, items, ratings, len(user_index), len(item_index),
                   list(user_index), list(item_index))


def _float(token, lineno):
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"bad rating {token!r}", lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite rating {token!r}", lineno)
    return value


def read_records(path, fmt="movielens-dat", jester_count_column=False):
    """Raw (user id, item id, rating) records from a ratings file, ids kept as strings."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    users, items, ratings = [], [], []
    with open(path, newline="", encoding="latin-1") as fh:
        if fmt == "csv":
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise EmptyDataset(f"{path} is empty")
            cols = [h.strip() for h in header]
            try:
                iu, ii, ir = cols.index("userId"), cols.index("movieId"), cols.index("rating")
            except ValueError:
                raise ParseError(f"csv header must contain userId,movieId,rating; got {header}", 1) from None
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) < len(cols):
                    raise ParseError(f"expected {len(cols)} fields, got {len(row)}", lineno)
                users.append(row[iu].strip())
                items.append(row[ii].strip())
                ratings.append(_float(row[ir], lineno))
        elif fmt in ("movielens-dat", "movielens-tsv"):
            sep = "::" if fmt == "movielens-dat" else "\t"
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(sep)
                if len(parts) < 3:
                    raise ParseError(f"expected user{sep}item{sep}rating[{sep}timestamp]", lineno)
                users.append(parts[0])
                items.append(parts[1])
                ratings.append(_float(parts[2], lineno))
        else:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                tokens = [t for t in line.replace(";", ",").replace("\t", ",").split(",") if t.strip()]
                if jester_count_column:
                    tokens = tokens[1:]
                for col, token in enumerate(tokens, start=1):
                    value = _float(token, lineno)
                    if value == JESTER_MISSING:
                        continue
                    if not -10.0 <= value <= 10.0:
                        raise ParseError(f"jester rating {value} outside [-10, 10]", lineno)
                    users.append(str(lineno))
                    items.append(str(col))
                    ratings.append(value)
    return users, items, ratings


def parse_ratings(path, fmt="movielens-dat", **kwargs):
    users, items, ratings = read_records(path, fmt, **kwargs)
    if not users:
        raise EmptyDataset(f"no ratings in {path}")
    return from_records(users, items, ratings)


def map_records(users, items, ratings, user_ids, item_ids):
    """Map raw records through existing id tables.

    Returns (dataset over the known pairs, boolean mask of records that were known).
    """
    umap = {raw: k for k, raw in enumerate(user_ids)}
    imap = {raw: k for k, raw in enumerate(item_ids)}
    u = np.array([umap.get(x, -1) for x in users], dtype=np.int64)
    i = np.array([imap.get(x, -1) for x in items], dtype=np.int64)
    known = (u >= 0) & (i >= 0)
    ds = Dataset(u[known], i[known], np.asarray(ratings, dtype=np.float64)[known],
                 len(user_ids), len(item_ids), list(user_ids), list(item_ids))
    return ds, known


@dataclass
class FoldSplit:
    assignment: np.ndarray  # fold id per triple
    k: int
    seed: int

    def test_index(self, fold):
        return np.flatnonzero(self.assignment == fold)

    def train_index(self, fold):
        return np.flatnonzero(self.assignment != fold)

    def split(self, data, fold):
        return data.subset(self.train_index(fold)), data.subset(self.test_index(fold))


def kfold_split(data, k=5, seed=0):
    """Shuffle with ``seed`` then deal triples round-robin into k folds."""
    n = len(data)
    if k < 2 or k > n:
        raise InvalidK(f"k must be in [2, {n}], got {k}")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % k
    return FoldSplit(assignment, k, seed)


def holdout_split(data, fraction, seed=0):
    """Random (train, held-out) split; used for the monitoring validation set."""
    n = len(data)
    n_out = int(round(fraction * n))
    perm = np.random.default_rng(seed).permutation(n)
    return data.subset(np.sort(perm[n_out:])), data.subset(np.sort(perm[:n_out]))


def center(train):
    """Subtract the mean training rating; returns (centered dataset, mean)."""
    if len(train) == 0:
        raise EmptyDataset("cannot center an empty dataset")
    y_mean = float(np.mean(train.ratings))
    return train.with_ratings(train.ratings - y_mean), y_mean


@dataclass
class SyntheticTask:
    train: Dataset
    truth: np.ndarray  # noiseless (I, J) matrix
    noisy: np.ndarray  # truth plus observation noise, every entry
    observed: np.ndarray  # (I, J) boolean mask of training entries
    cold_users: int

    def heldout(self, include_cold=True):
        """Dataset of every unobserved entry (noisy ratings)."""
        mask = ~self.observed
        if not include_cold and self.cold_users:
            mask[self.truth.shape[0] - self.cold_users:] = False
        u, i = np.nonzero(mask)
        return Dataset.from_arrays(u, i, self.noisy[u, i], *self.truth.shape)

    def is_cold(self, users):
        return np.asarray(users) >= self.truth.shape[0] - self.cold_users


def synthetic_low_rank(num_users=50, num_items=50, rank=2, observed=0.3, noise=0.1,
                       cold_users=0, seed=0, offset=0.0):
    """Low-rank ground truth ``U V^T / sqrt(rank)`` with a random observation pattern.

    The last ``cold_users`` users have no observed entries at all.
    """
    rng = np.random.default_rng(seed)
    U = rng.normal(size=(num_users, rank))
    V = rng.normal(size=(num_items, rank))
    F = U @ V.T / np.sqrt(rank) + offset
    Y = F + noise * rng.normal(size=F.shape)
    mask = rng.random((num_users, num_items)) < observed
    if cold_users:
        mask[num_users - cold_users:] = False
    u, i = np.nonzero(mask)
    train = Dataset.from_arrays(u, i, Y[u, i], num_users, num_items)
    return SyntheticTask(train, F, Y, mask, cold_users)
