"""Flow-feature dataset handling.

CSV ingestion with an explicit cleaning policy (NaN -> train median,
±Inf -> train extreme finite values, everything counted), min-max scaling
fitted on the training split only, stratified splitting, and reshaping to
the (n, features, 1, 1) layout the network consumes. A synthetic Gaussian
blob generator stands in for real flow captures at desk scale.
"""

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LabelError, ParseError, SchemaError, StratifyError
from .tensor import Tensor

# Multi-stage attack labels used by DAPT2020-shaped exports.
DAPT_CLASSES = ("Benign", "Data", "Establish", "Lateral", "Reconn")


@dataclass
class FlowRecord:
    """One network flow: a numeric feature vector plus its class label."""

    features: np.ndarray
    label: str


@dataclass(frozen=True)
class LabelCodec:
    """Bijective mapping between ordered class names and codes 0..K-1."""

    classes: tuple

    @classmethod
    def from_labels(cls, labels):
        return cls(tuple(sorted(set(labels))))

    def encode(self, label):
        try:
            return self.classes.index(label)
        except ValueError:
            raise LabelError(f"unknown class {label!r}") from None

    def encode_all(self, labels):
        lookup = {c: i for i, c in enumerate(self.classes)}
        try:
            return np.array([lookup[l] for l in labels], dtype=np.int64)
        except KeyError as exc:
            raise LabelError(f"unknown class {exc.args[0]!r}") from None

    def decode(self, code):
        if not 0 <= code < len(self.classes):
            raise LabelError(f"code {code} outside [0, {len(self.classes)})")
        return self.classes[code]

    def __len__(self):
        return len(self.classes)


@dataclass(frozen=True)
class CsvSchema:
    """Expected CSV layout: a label column plus numeric feature columns.

    feature_columns None means every non-label column is a feature.
    """

    label_column: str = "label"
    feature_columns: tuple | None = None
    expected_features: int | None = None


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.20
    val_fraction: float = 0.10  # of the remainder after the test cut
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.test_fraction < 1 or not 0 < self.val_fraction < 1:
            raise ValueError("split fractions must lie in (0, 1)")


def load_csv(path, schema=CsvSchema()):
    """Parse a flow-feature CSV into records.

    Unparseable numeric cells become NaN so the cleaning policy can impute
    and count them; structurally bad rows (wrong field count) raise
    ParseError with their 1-based row number. Missing or extra columns
    raise SchemaError.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: missing header row") from None
        header = [h.strip() for h in header]
        if schema.label_column not in header:
            raise SchemaError(
                f"{path}: label column {schema.label_column!r} not in header")
        if schema.feature_columns is not None:
            missing = [c for c in schema.feature_columns if c not in header]
            if missing:
                raise SchemaError(f"{path}: missing feature columns {missing}")
            extra = [c for c in header
                     if c != schema.label_column and c not in schema.feature_columns]
            if extra:
                raise SchemaError(f"{path}: unexpected extra columns {extra}")
            feature_names = list(schema.feature_columns)
        else:
            feature_names = [c for c in header if c != schema.label_column]
        if schema.expected_features is not None and \
                len(feature_names) != schema.expected_features:
            raise SchemaError(
                f"{path}: expected {schema.expected_features} feature columns, "
                f"found {len(feature_names)}")

        label_idx = header.index(schema.label_column)
        feature_idx = [header.index(c) for c in feature_names]

        records = []
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: row {row_number} has {len(row)} fields, "
                    f"expected {len(header)}", row_number=row_number)
            values = np.empty(len(feature_idx), dtype=np.float64)
            for k, idx in enumerate(feature_idx):
                try:
                    values[k] = float(row[idx])
                except ValueError:
                    values[k] = np.nan  # routed to the cleaning policy
            records.append(FlowRecord(features=values, label=row[label_idx].strip()))
    return records


@dataclass
class ScalerStats:
    """Column statistics fitted on the training split only.

    median / inf_lo / inf_hi drive imputation (NaN, -Inf, +Inf); lo / hi
    drive the min-max scaling to [0, 1].
    """

    median: np.ndarray
    inf_lo: np.ndarray
    inf_hi: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @property
    def n_features(self):
        return len(self.lo)

    def fingerprint(self):
        digest = hashlib.sha256()
        for arr in (self.median, self.inf_lo, self.inf_hi, self.lo, self.hi):
            digest.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return digest.hexdigest()[:16]

    def save(self, path):
        payload = {
            "format_version": 1,
            "n_features": self.n_features,
            "median": self.median.tolist(),
            "inf_lo": self.inf_lo.tolist(),
            "inf_hi": self.inf_hi.tolist(),
            "lo": self.lo.tolist(),
            "hi": self.hi.tolist(),
            "fingerprint": self.fingerprint(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
        return path

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(
            median=np.asarray(payload["median"], dtype=np.float64),
            inf_lo=np.asarray(payload["inf_lo"], dtype=np.float64),
            inf_hi=np.asarray(payload["inf_hi"], dtype=np.float64),
            lo=np.asarray(payload["lo"], dtype=np.float64),
            hi=np.asarray(payload["hi"], dtype=np.float64),
        )


@dataclass
class ScaledData:
    records: list
    stats: ScalerStats
    n_nan_imputed: int = 0
    n_inf_imputed: int = 0
    n_clamped: int = 0


def _feature_matrix(records):
    if not records:
        raise ValueError("no records to process")
    return np.stack([r.features for r in records]).astype(np.float64)


def clean_and_scale(records, stats=None):
    """Impute NaN/±Inf, then min-max scale to [0, 1].

    With stats=None the statistics are fitted on these records (the training
    call); otherwise the given train-fitted stats are applied and values
    falling outside [0, 1] are clamped and counted. Constant columns scale
    to 0.
    """
    f = _feature_matrix(records)
    nan_mask = np.isnan(f)
    pos_mask = np.isposinf(f)
    neg_mask = np.isneginf(f)

    if stats is None:
        finite = np.where(np.isfinite(f), f, np.nan)
        all_nan = np.all(np.isnan(finite), axis=0)
        safe = np.where(all_nan[None, :], 0.0, finite)
        median = np.nanmedian(safe, axis=0)
        inf_hi = np.nanmax(safe, axis=0)
        inf_lo = np.nanmin(safe, axis=0)
        f = np.where(nan_mask, median, f)
        f = np.where(pos_mask, inf_hi, f)
        f = np.where(neg_mask, inf_lo, f)
        lo = f.min(axis=0)
        hi = f.max(axis=0)
        stats = ScalerStats(median=median, inf_lo=inf_lo, inf_hi=inf_hi,
                            lo=lo, hi=hi)
        clamped = 0
        scaled = _scale(f, stats)
    else:
        if f.shape[1] != stats.n_features:
            raise ValueError(
                f"records have {f.shape[1]} features, stats expect "
                f"{stats.n_features}")
        f = np.where(nan_mask, stats.median, f)
        f = np.where(pos_mask, stats.inf_hi, f)
        f = np.where(neg_mask, stats.inf_lo, f)
        scaled = _scale(f, stats)
        out_of_range = (scaled < 0.0) | (scaled > 1.0)
        clamped = int(out_of_range.sum())
        scaled = np.clip(scaled, 0.0, 1.0)

    scaled = scaled.astype(np.float32)
    cleaned = [FlowRecord(features=scaled[i], label=r.label)
               for i, r in enumerate(records)]
    return ScaledData(
        records=cleaned,
        stats=stats,
        n_nan_imputed=int(nan_mask.sum()),
        n_inf_imputed=int(pos_mask.sum() + neg_mask.sum()),
        n_clamped=clamped,
    )


def _scale(f, stats):
    span = stats.hi - stats.lo
    with np.errstate(invalid="ignore", divide="ignore"):
        scaled = (f - stats.lo) / span
    return np.where(span > 0, scaled, 0.0)


def split_sizes(n, spec):
    """(train, val, test) sizes: the test cut keeps floor(n*(1-test_fraction))
    records, then the remainder keeps floor(remainder*(1-val_fraction)) for
    training."""
    keep = math.floor(n * (1.0 - spec.test_fraction))
    n_test = n - keep
    n_train = math.floor(keep * (1.0 - spec.val_fraction))
    n_val = keep - n_train
    return n_train, n_val, n_test


def _largest_remainder(class_counts, take):
    """Allocate `take` draws across classes proportionally, within one
    record of the exact quota."""
    total = sum(class_counts.values())
    exact = {c: n * take / total for c, n in class_counts.items()}
    alloc = {c: math.floor(q) for c, q in exact.items()}
    short = take - sum(alloc.values())
    order = sorted(class_counts, key=lambda c: (-(exact[c] - alloc[c]), str(c)))
    for c in order:
        if short == 0:
            break
        if alloc[c] < class_counts[c]:
            alloc[c] += 1
            short -= 1
    return alloc


def split(records, spec=SplitSpec()):
    """Deterministic (train, val, test) partition.

    Stratified mode preserves class ratios within ±1 record per class and
    raises StratifyError when a class has fewer records than there are
    classes.
    """
    n = len(records)
    n_train, n_val, n_test = split_sizes(n, spec)
    rng = np.random.default_rng(spec.seed)

    if not spec.stratified:
        perm = rng.permutation(n)
        test_idx = perm[:n_test]
        val_idx = perm[n_test:n_test + n_val]
        train_idx = perm[n_test + n_val:]
    else:
        by_class = {}
        for i, r in enumerate(records):
            by_class.setdefault(r.label, []).append(i)
        k = len(by_class)
        for label, idxs in by_class.items():
            if len(idxs) < k:
                raise StratifyError(
                    f"class {label!r} has {len(idxs)} records; stratified "
                    f"splitting needs at least {k} per class")
        counts = {c: len(v) for c, v in by_class.items()}
        test_alloc = _largest_remainder(counts, n_test)
        remaining = {c: counts[c] - test_alloc[c] for c in counts}
        val_alloc = _largest_remainder(remaining, n_val)

        test_idx, val_idx, train_idx = [], [], []
        for label in sorted(by_class, key=str):
            idxs = np.array(by_class[label])
            rng.shuffle(idxs)
            t, v = test_alloc[label], val_alloc[label]
            test_idx.extend(idxs[:t])
            val_idx.extend(idxs[t:t + v])
            train_idx.extend(idxs[t + v:])
        # interleave classes so partition prefixes are representative
        test_idx, val_idx, train_idx = (
            np.array(part, dtype=int)[rng.permutation(len(part))]
            for part in (test_idx, val_idx, train_idx))

    return ([records[i] for i in train_idx],
            [records[i] for i in val_idx],
            [records[i] for i in test_idx])


def to_network_input(records, codec=None):
    """Stack records into the (n, features, 1, 1) batch layout. Feature k of
    record i lands at element (i, k, 0, 0); labels come from the codec."""
    if codec is None:
        codec = LabelCodec.from_labels(r.label for r in records)
    features = np.stack([r.features for r in records])
    batch = Tensor(features.reshape(len(records), features.shape[1], 1, 1),
                   checked=True)
    labels = codec.encode_all([r.label for r in records])
    return batch, labels


def make_synthetic_blobs(n, k_classes=5, d=75, separation=3.0, seed=0):
    """Gaussian clusters standing in for flow captures.

    Class-balanced within ±1 record; separation scales the distance between
    cluster centers (0 makes classes indistinguishable). Uses the DAPT-style
    class names when k_classes is 5.
    """
    if n < k_classes:
        raise ValueError(f"need at least {k_classes} records, got {n}")
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(k_classes, d)) * separation
    if k_classes == len(DAPT_CLASSES):
        names = DAPT_CLASSES
    else:
        names = tuple(f"class_{i}" for i in range(k_classes))
    counts = [n // k_classes + (1 if i < n % k_classes else 0)
              for i in range(k_classes)]
    records = []
    for c, count in enumerate(counts):
        feats = centers[c] + rng.normal(size=(count, d))
        records.extend(FlowRecord(features=feats[j], label=names[c])
                       for j in range(count))
    order = rng.permutation(len(records))
    return [records[i] for i in order]


@dataclass
class PreparedData:
    """Leakage-free pipeline output: scaler fitted on train only, applied
    everywhere, splits tensorized for the trainer."""

    train: tuple
    val: tuple
    test: tuple
    codec: LabelCodec
    stats: ScalerStats
    n_nan_imputed: int = 0
    n_inf_imputed: int = 0
    n_clamped: int = 0


def prepare_dataset(records, spec=SplitSpec(), codec=None):
    """split -> fit scaler on train -> apply to val/test -> tensorize."""
    train_recs, val_recs, test_recs = split(records, spec)
    if codec is None:
        codec = LabelCodec.from_labels(r.label for r in records)
    fitted = clean_and_scale(train_recs)
    val_scaled = clean_and_scale(val_recs, fitted.stats)
    test_scaled = clean_and_scale(test_recs, fitted.stats)
    return PreparedData(
        train=to_network_input(fitted.records, codec),
        val=to_network_input(val_scaled.records, codec),
        test=to_network_input(test_scaled.records, codec),
        codec=codec,
        stats=fitted.stats,
        n_nan_imputed=fitted.n_nan_imputed + val_scaled.n_nan_imputed
        + test_scaled.n_nan_imputed,
        n_inf_imputed=fitted.n_inf_imputed + val_scaled.n_inf_imputed
        + test_scaled.n_inf_imputed,
        n_clamped=val_scaled.n_clamped + test_scaled.n_clamped,
    )
