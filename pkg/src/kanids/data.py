"""Intrusion-detection CSV ingestion and deterministic preprocessing.

Pipeline per dataset: parse the published CSV layout, binarize labels
(normal = 0, any attack = 1), one-hot encode categoricals with the train
split's vocabulary, impute missing/Inf numerics with the train median,
min-max scale every numeric column into [-1, 1] with train statistics
(test values are clipped), and drop columns that are constant on train.
All decisions derive from the train split only, so there is no leakage,
and the whole transform is fingerprinted for cache idempotence.

The [-1, 1] range is deliberate: it is the domain of the default spline
grid, so KAN edge functions see their inputs inside the knot span.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

# ---------------------------------------------------------------------------
# schemas

NSL_KDD_FEATURES = (
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes",
    "land", "wrong_fragment", "urgent", "hot", "num_failed_logins",
    "logged_in", "num_compromised", "root_shell", "su_attempted", "num_root",
    "num_file_creations", "num_shells", "num_access_files",
    "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
    "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate",
    "srv_rerror_rate", "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate",
    "dst_host_count", "dst_host_srv_count", "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate", "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
    "dst_host_srv_serror_rate", "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
)

UNSW_NB15_COLUMNS = (
    "srcip", "sport", "dstip", "dsport", "proto", "state", "dur", "sbytes",
    "dbytes", "sttl", "dttl", "sloss", "dloss", "service", "sload", "dload",
    "spkts", "dpkts", "swin", "dwin", "stcpb", "dtcpb", "smeansz", "dmeansz",
    "trans_depth", "res_bdy_len", "sjit", "djit", "stime", "ltime", "sintpkt",
    "dintpkt", "tcprtt", "synack", "ackdat", "is_sm_ips_ports",
    "ct_state_ttl", "ct_flw_http_mthd", "is_ftp_login", "ct_ftp_cmd",
    "ct_srv_src", "ct_srv_dst", "ct_dst_ltm", "ct_src_ltm",
    "ct_src_dport_ltm", "ct_dst_sport_ltm", "ct_dst_src_ltm", "attack_cat",
    "label",
)


@dataclass(frozen=True)
class DatasetSchema:
    """Published file layout plus the label-binarization rule."""

    name: str
    raw_feature_count: int
    categorical_columns: tuple[str, ...]
    label_column: str
    normal_label_values: frozenset[str]
    columns: tuple[str, ...] | None = None  # fixed order for headerless files
    drop_columns: tuple[str, ...] = ()      # identifiers, never features


SCHEMAS: dict[str, DatasetSchema] = {
    "nsl_kdd": DatasetSchema(
        name="nsl_kdd",
        raw_feature_count=41,
        categorical_columns=("protocol_type", "service", "flag"),
        label_column="label",
        normal_label_values=frozenset({"normal"}),
        columns=NSL_KDD_FEATURES + ("label", "difficulty"),
        drop_columns=("difficulty",),
    ),
    "unsw_nb15": DatasetSchema(
        name="unsw_nb15",
        raw_feature_count=49,
        categorical_columns=("proto", "state", "service"),
        label_column="label",
        normal_label_values=frozenset({"0"}),
        columns=UNSW_NB15_COLUMNS,
        drop_columns=("srcip", "sport", "dstip", "dsport", "stime", "ltime",
                      "attack_cat"),
    ),
    "cicids2017": DatasetSchema(
        name="cicids2017",
        raw_feature_count=80,
        categorical_columns=(),
        label_column="Label",
        normal_label_values=frozenset({"BENIGN"}),
    ),
    "bot_iot": DatasetSchema(
        name="bot_iot",
        raw_feature_count=35,
        categorical_columns=("proto", "flgs", "state"),
        label_column="attack",
        normal_label_values=frozenset({"0"}),
        drop_columns=("pkSeqID", "stime", "ltime", "saddr", "sport", "daddr",
                      "dport", "smac", "dmac", "soui", "doui", "sco", "dco",
                      "seq", "category", "subcategory"),
    ),
}


@dataclass
class RawTable:
    """Typed feature table with binarized labels, straight from ingest."""

    schema_name: str
    features: pd.DataFrame
    labels: np.ndarray
    categorical: tuple[str, ...]
    ingest_stats: dict = field(default_factory=dict)
    source_ids: np.ndarray | None = None  # diagnostics only, never a feature


@dataclass
class DatasetSplit:
    """Preprocessed features in [-1, 1] with binary labels."""

    name: str
    features: np.ndarray
    labels: np.ndarray
    fingerprint: str
    feature_names: tuple[str, ...] | None = None
    feature_stats: dict | None = None  # train-split per-column min/max


# ---------------------------------------------------------------------------
# ingest


def _read_rows(path: Path) -> list[list[str]]:
    text = path.read_text(encoding="utf-8", errors="replace")
    rows = []
    for line in text.splitlines():
        if line.strip():
            rows.append([cell.strip() for cell in line.split(",")])
    return rows


def ingest_csv(path, schema: DatasetSchema) -> RawTable:
    """Parse one published CSV into typed columns with binary labels.

    Headerless layouts (NSL-KDD, UNSW-NB15 full set) are applied by schema
    column order; a header row matching the schema is also accepted.
    Unparseable numerics and infinities are counted and left as missing for
    the preprocessing policy (train-median imputation) to handle.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing file: {path}")
    rows = _read_rows(path)
    if not rows:
        raise ValueError(f"empty file: {path}")

    if schema.columns is not None:
        names = list(schema.columns)
        first_is_header = [c.lower() for c in rows[0]] == [c.lower() for c in names]
        data_rows = rows[1:] if first_is_header else rows
        bad = [r for r in data_rows if len(r) != len(names)]
        if bad:
            raise ValueError(
                f"schema mismatch: {path} has rows with {len(bad[0])} fields, "
                f"expected {len(names)} for {schema.name}")
    else:
        names = rows[0]
        data_rows = rows[1:]
        if schema.label_column not in names:
            raise ValueError(
                f"schema mismatch: {path} header lacks label column "
                f"{schema.label_column!r}")
        widths = {len(r) for r in data_rows}
        if widths - {len(names)}:
            raise ValueError(
                f"schema mismatch: {path} has rows not matching its header width")
    if not data_rows:
        raise ValueError(f"empty file: {path} has a header but no data rows")

    df = pd.DataFrame(data_rows, columns=names, dtype=str)
    labels_str = df[schema.label_column].str.strip()
    labels = (~labels_str.isin(schema.normal_label_values)).to_numpy(np.uint8)

    drop = set(schema.drop_columns) | {schema.label_column}
    feature_cols = [c for c in names if c not in drop]
    feats = df[feature_cols].copy()

    coerced = 0
    infs = 0
    missing = 0
    categorical = tuple(c for c in schema.categorical_columns
                        if c in feature_cols)
    for col in feature_cols:
        if col in categorical:
            continue
        raw = feats[col].replace("", None)
        numeric = pd.to_numeric(raw, errors="coerce")
        coerced += int((numeric.isna() & raw.notna()).sum())
        missing += int(raw.isna().sum())
        inf_mask = np.isinf(numeric.to_numpy(np.float64, na_value=np.nan))
        infs += int(inf_mask.sum())
        numeric[inf_mask] = np.nan
        feats[col] = numeric.astype(np.float64)

    stats = {
        "rows_read": len(data_rows),
        "feature_columns": len(feature_cols),
        "coerced_non_numeric": coerced,
        "inf_values": infs,
        "empty_values": missing,
        "attack_rows": int(labels.sum()),
        "normal_rows": int(len(labels) - labels.sum()),
    }
    return RawTable(schema.name, feats, labels, categorical, stats)


# ---------------------------------------------------------------------------
# preprocessing


@dataclass(frozen=True)
class Transform:
    """Everything fitted on the train split, applied to both splits."""

    numeric_cols: tuple[str, ...]
    medians: tuple[float, ...]
    mins: tuple[float, ...]
    maxs: tuple[float, ...]
    onehot: tuple[tuple[str, tuple[str, ...]], ...]  # (column, vocabulary)
    feature_names: tuple[str, ...]


def _fit_transform(feats: pd.DataFrame, categorical: tuple[str, ...]) -> Transform:
    numeric_cols = []
    medians = []
    mins = []
    maxs = []
    for col in feats.columns:
        if col in categorical:
            continue
        values = feats[col].to_numpy(np.float64)
        finite = values[np.isfinite(values)]
        med = float(np.median(finite)) if finite.size else 0.0
        lo = float(finite.min()) if finite.size else 0.0
        hi = float(finite.max()) if finite.size else 0.0
        if hi <= lo:
            continue  # constant on train: drop
        numeric_cols.append(col)
        medians.append(med)
        mins.append(lo)
        maxs.append(hi)

    onehot = []
    for col in categorical:
        vocab = tuple(sorted(set(feats[col].astype(str))))
        if len(vocab) <= 1:
            continue  # constant on train: drop
        onehot.append((col, vocab))

    names = list(numeric_cols)
    for col, vocab in onehot:
        names += [f"{col}={v}" for v in vocab]
    return Transform(tuple(numeric_cols), tuple(medians), tuple(mins),
                     tuple(maxs), tuple(onehot), tuple(names))


def _apply_transform(tf: Transform, feats: pd.DataFrame) -> np.ndarray:
    n = len(feats)
    out = np.zeros((n, len(tf.feature_names)))
    for j, col in enumerate(tf.numeric_cols):
        values = feats[col].to_numpy(np.float64)
        values = np.where(np.isfinite(values), values, tf.medians[j])
        scaled = 2.0 * (values - tf.mins[j]) / (tf.maxs[j] - tf.mins[j]) - 1.0
        out[:, j] = np.clip(scaled, -1.0, 1.0)
    j = len(tf.numeric_cols)
    for col, vocab in tf.onehot:
        values = feats[col].astype(str).to_numpy()
        for v in vocab:
            out[:, j] = (values == v).astype(np.float64)
            j += 1
    return out


def _fingerprint(schema_name: str, split_seed: int, official: bool,
                 tf: Transform) -> str:
    doc = {
        "schema": schema_name,
        "seed": split_seed,
        "official_split": official,
        "numeric": list(zip(tf.numeric_cols, tf.medians, tf.mins, tf.maxs)),
        "onehot": [[c, list(v)] for c, v in tf.onehot],
    }
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _stratified_split_indices(labels: np.ndarray, test_fraction: float,
                              seed: int) -> tuple[np.ndarray, np.ndarray]:
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError(
            "single-class dataset: stratified splitting is impossible")
    train_idx = []
    test_idx = []
    rng = np.random.default_rng([seed, 1701])
    for cls in classes:
        members = np.flatnonzero(labels == cls)
        perm = rng.permutation(members)
        n_test = int(round(len(members) * test_fraction))
        test_idx.append(perm[:n_test])
        train_idx.append(perm[n_test:])
    return (np.sort(np.concatenate(train_idx)),
            np.sort(np.concatenate(test_idx)))


def _check_invariants(split: DatasetSplit) -> None:
    if not np.all(np.isfinite(split.features)):
        raise AssertionError("preprocessed features contain non-finite values")
    if split.features.size and (split.features.min() < -1.0 - 1e-12
                                or split.features.max() > 1.0 + 1e-12):
        raise AssertionError("preprocessed features escape [-1, 1]")
    if not np.all((split.labels == 0) | (split.labels == 1)):
        raise AssertionError("labels are not binary")


def preprocess(raw: RawTable, split_seed: int, test_raw: RawTable | None = None,
               test_fraction: float = 0.2) -> tuple[DatasetSplit, DatasetSplit]:
    """Fit the transform on train data and emit both splits.

    With ``test_raw`` the two tables are used as the official split;
    otherwise ``raw`` is split stratified-by-label at ``test_fraction``.
    """
    if len(raw.features) == 0:
        raise ValueError("empty table: nothing to preprocess")

    if test_raw is not None:
        train_feats, train_labels = raw.features, raw.labels
        test_feats, test_labels = test_raw.features, test_raw.labels
        if list(train_feats.columns) != list(test_feats.columns):
            raise ValueError(
                "schema mismatch: train and test tables have different columns")
        official = True
    else:
        tr, te = _stratified_split_indices(raw.labels, test_fraction, split_seed)
        train_feats = raw.features.iloc[tr]
        train_labels = raw.labels[tr]
        test_feats = raw.features.iloc[te]
        test_labels = raw.labels[te]
        official = False

    tf = _fit_transform(train_feats, raw.categorical)
    fp = _fingerprint(raw.schema_name, split_seed, official, tf)
    stats = {"min": np.array(tf.mins), "max": np.array(tf.maxs)}

    train = DatasetSplit(raw.schema_name, _apply_transform(tf, train_feats),
                         np.asarray(train_labels, np.uint8), fp,
                         tf.feature_names, stats)
    test = DatasetSplit(raw.schema_name, _apply_transform(tf, test_feats),
                        np.asarray(test_labels, np.uint8), fp,
                        tf.feature_names, stats)
    _check_invariants(train)
    _check_invariants(test)
    return train, test


def subsample_split(split: DatasetSplit, rows: int, seed: int) -> DatasetSplit:
    """Deterministic label-stratified subsample (largest-remainder quotas)."""
    n = len(split.labels)
    if rows >= n:
        return split
    classes, counts = np.unique(split.labels, return_counts=True)
    exact = counts * (rows / n)
    quotas = np.floor(exact).astype(int)
    remainder = rows - quotas.sum()
    order = np.argsort(-(exact - quotas))
    for i in range(remainder):
        quotas[order[i % len(classes)]] += 1
    rng = np.random.default_rng([seed, 4242])
    chosen = []
    for cls, quota in zip(classes, quotas):
        members = np.flatnonzero(split.labels == cls)
        chosen.append(rng.permutation(members)[:quota])
    idx = np.sort(np.concatenate(chosen))
    return DatasetSplit(split.name, split.features[idx], split.labels[idx],
                        split.fingerprint, split.feature_names,
                        split.feature_stats)


# ---------------------------------------------------------------------------
# square reshape for 2-D models


def square_side(dim: int) -> int:
    return int(np.ceil(np.sqrt(dim)))


def reshape_square(features: np.ndarray) -> np.ndarray:
    """One feature row -> (1, S, S), zero-padded, row-major fill."""
    features = np.asarray(features, dtype=np.float64).ravel()
    side = square_side(features.size)
    padded = np.zeros(side * side)
    padded[:features.size] = features
    return padded.reshape(1, side, side)


def reshape_square_batch(x: np.ndarray) -> np.ndarray:
    """(batch, d) -> (batch, 1, S, S), zero-padded."""
    b, d = x.shape
    side = square_side(d)
    padded = np.zeros((b, side * side))
    padded[:, :d] = x
    return padded.reshape(b, 1, side, side)


# ---------------------------------------------------------------------------
# Tri-IDS union merge

_slug_re = re.compile(r"[^a-z0-9]+")


def _slug(name: str) -> str:
    return _slug_re.sub("_", name.strip().lower()).strip("_")


_CICIDS_STANDARD = (
    "Destination Port", "Flow Duration", "Total Fwd Packets",
    "Total Backward Packets", "Total Length of Fwd Packets",
    "Total Length of Bwd Packets", "Fwd Packet Length Max",
    "Fwd Packet Length Min", "Fwd Packet Length Mean",
    "Fwd Packet Length Std", "Bwd Packet Length Max", "Bwd Packet Length Min",
    "Bwd Packet Length Mean", "Bwd Packet Length Std", "Flow Bytes/s",
    "Flow Packets/s", "Flow IAT Mean", "Flow IAT Std", "Flow IAT Max",
    "Flow IAT Min", "Fwd IAT Total", "Fwd IAT Mean", "Fwd IAT Std",
    "Fwd IAT Max", "Fwd IAT Min", "Bwd IAT Total", "Bwd IAT Mean",
    "Bwd IAT Std", "Bwd IAT Max", "Bwd IAT Min", "Fwd PSH Flags",
    "Bwd PSH Flags", "Fwd URG Flags", "Bwd URG Flags", "Fwd Header Length",
    "Bwd Header Length", "Fwd Packets/s", "Bwd Packets/s",
    "Min Packet Length", "Max Packet Length", "Packet Length Mean",
    "Packet Length Std", "Packet Length Variance", "FIN Flag Count",
    "SYN Flag Count", "RST Flag Count", "PSH Flag Count", "ACK Flag Count",
    "URG Flag Count", "CWE Flag Count", "ECE Flag Count", "Down/Up Ratio",
    "Average Packet Size", "Avg Fwd Segment Size", "Avg Bwd Segment Size",
    "Fwd Header Length.1", "Fwd Avg Bytes/Bulk", "Fwd Avg Packets/Bulk",
    "Fwd Avg Bulk Rate", "Bwd Avg Bytes/Bulk", "Bwd Avg Packets/Bulk",
    "Bwd Avg Bulk Rate", "Subflow Fwd Packets", "Subflow Fwd Bytes",
    "Subflow Bwd Packets", "Subflow Bwd Bytes", "Init_Win_bytes_forward",
    "Init_Win_bytes_backward", "act_data_pkt_fwd", "min_seg_size_forward",
    "Active Mean", "Active Std", "Active Max", "Active Min", "Idle Mean",
    "Idle Std", "Idle Max", "Idle Min",
)

_BOT_IOT_FEATURES = ("flgs", "proto", "pkts", "bytes", "state", "dur", "mean",
                     "stddev", "sum", "min", "max", "spkts", "dpkts",
                     "sbytes", "dbytes", "rate", "srate", "drate")

# Canonical rename map for the Tri-IDS union merge.  Every feature column a
# source may contribute must appear here explicitly; an unknown column is an
# error, never silently passed through.  Columns sharing a canonical name
# (proto, duration, src_bytes, dst_bytes) are merged with values passed
# through unchanged.
TRI_IDS_ALIASES: dict[str, dict[str, str]] = {
    "nsl_kdd": {
        **{c: f"nsl_{c}" for c in NSL_KDD_FEATURES},
        "protocol_type": "proto",
        "duration": "duration",
        "src_bytes": "src_bytes",
        "dst_bytes": "dst_bytes",
    },
    "bot_iot": {
        **{c: f"bot_{c}" for c in _BOT_IOT_FEATURES},
        "proto": "proto",
        "dur": "duration",
        "sbytes": "src_bytes",
        "dbytes": "dst_bytes",
    },
    "cicids2017": {
        **{c: f"cic_{_slug(c)}" for c in _CICIDS_STANDARD},
        "Flow Duration": "duration",
    },
}


def build_tri_ids(bot_iot: RawTable, nsl_kdd: RawTable, cicids: RawTable,
                  target_rows: int = 60_000, seed: int = 42,
                  aliases: dict[str, dict[str, str]] | None = None) -> RawTable:
    """Union-of-features merge with per-source label-stratified quotas.

    Each source contributes ``target_rows // 3`` rows (or all it has);
    canonical column names come from the explicit alias map; a column with
    no alias raises.  Columns absent in a source are filled with 0 ("0" for
    categoricals).  A source-id vector is kept for diagnostics only.
    """
    aliases = aliases if aliases is not None else TRI_IDS_ALIASES
    sources = [bot_iot, nsl_kdd, cicids]
    quota = target_rows // 3

    renamed = []
    categorical: list[str] = []
    for table in sources:
        amap = aliases.get(table.schema_name)
        if amap is None:
            raise ValueError(
                f"alias map incomplete: no map for source {table.schema_name!r}")
        unknown = [c for c in table.features.columns if c not in amap]
        if unknown:
            raise ValueError(
                f"alias map incomplete: column {unknown[0]!r} of source "
                f"{table.schema_name!r} matches no canonical name; add it "
                f"explicitly")
        frame = table.features.rename(columns=amap)
        renamed.append(frame)
        for col in table.categorical:
            canon = amap[col]
            if canon not in categorical:
                categorical.append(canon)

    union: list[str] = []
    for frame in renamed:
        for col in frame.columns:
            if col not in union:
                union.append(col)

    parts = []
    labels = []
    source_ids = []
    for s_idx, (table, frame) in enumerate(zip(sources, renamed)):
        take = min(quota, len(frame))
        if take < len(frame):
            rng = np.random.default_rng([seed, s_idx])
            classes, counts = np.unique(table.labels, return_counts=True)
            exact = counts * (take / len(frame))
            quotas = np.floor(exact).astype(int)
            order = np.argsort(-(exact - quotas))
            for i in range(take - quotas.sum()):
                quotas[order[i % len(classes)]] += 1
            chosen = []
            for cls, q in zip(classes, quotas):
                members = np.flatnonzero(table.labels == cls)
                chosen.append(rng.permutation(members)[:q])
            idx = np.sort(np.concatenate(chosen))
        else:
            idx = np.arange(len(frame))
        sub = frame.iloc[idx].reset_index(drop=True)
        for col in union:
            if col not in sub.columns:
                sub[col] = "0" if col in categorical else 0.0
        parts.append(sub[union])
        labels.append(table.labels[idx])
        source_ids.append(np.full(len(idx), s_idx, dtype=np.int8))

    merged = pd.concat(parts, ignore_index=True)
    stats = {
        "rows_per_source": [len(p) for p in parts],
        "merged_feature_columns": len(union),
        "sources": [t.schema_name for t in sources],
    }
    return RawTable("tri_ids", merged, np.concatenate(labels),
                    tuple(c for c in categorical if c in union), stats,
                    source_ids=np.concatenate(source_ids))


# ---------------------------------------------------------------------------
# split cache

SPLIT_MAGIC = b"KANIDSS1"


def save_split(split: DatasetSplit, path) -> None:
    """Binary cache: magic, JSON header (name, fingerprint, dims), float64 LE
    feature block, one byte per label."""
    n, d = split.features.shape
    header = {"name": split.name, "fingerprint": split.fingerprint,
              "rows": n, "cols": d}
    payload = (SPLIT_MAGIC + json.dumps(header, sort_keys=True).encode()
               + b"\n"
               + np.ascontiguousarray(split.features, dtype="<f8").tobytes()
               + np.asarray(split.labels, dtype=np.uint8).tobytes())
    Path(path).write_bytes(payload)


def load_split(path) -> DatasetSplit:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing file: {path}")
    raw = path.read_bytes()
    if not raw.startswith(SPLIT_MAGIC):
        raise ValueError(f"not a split cache file: {path}")
    head_end = raw.index(b"\n", len(SPLIT_MAGIC))
    header = json.loads(raw[len(SPLIT_MAGIC):head_end])
    n, d = header["rows"], header["cols"]
    body = raw[head_end + 1:]
    feat_bytes = n * d * 8
    if len(body) != feat_bytes + n:
        raise ValueError(f"corrupt split cache: {path}")
    features = np.frombuffer(body[:feat_bytes], dtype="<f8").reshape(n, d).copy()
    labels = np.frombuffer(body[feat_bytes:], dtype=np.uint8).copy()
    return DatasetSplit(header["name"], features, labels,
                        header["fingerprint"])
