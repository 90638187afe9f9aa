"""Deterministic synthetic datasets.

Two generators: a linearly separable toy set for overfit smoke tests, and a
surrogate network-traffic generator that writes CSV files in the NSL-KDD
43-column layout (41 features, label string, difficulty).  The surrogate
exists so the full prepare/train/report pipeline can be exercised end to
end when the real published files are not on disk; it is clearly labeled
and is never a claim about real-data numbers.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from kanids.data import NSL_KDD_FEATURES, DatasetSplit


def separable_split(n: int = 200, dim: int = 16, seed: int = 0,
                    margin: float = 0.15) -> DatasetSplit:
    """Linearly separable points in [-1, 1]^dim with a guaranteed margin."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=dim)
    w /= np.linalg.norm(w)
    xs = []
    ys = []
    while len(xs) < n:
        x = rng.uniform(-1.0, 1.0, size=dim)
        score = float(x @ w)
        if abs(score) < margin:
            continue
        xs.append(x)
        ys.append(1 if score > 0 else 0)
    return DatasetSplit("separable", np.array(xs), np.array(ys, np.uint8),
                        fingerprint=f"separable-{n}-{dim}-{seed}")


# --- surrogate traffic ------------------------------------------------------

_FAMILIES = ("normal", "dos", "probe", "r2l", "u2r")

_LABELS = {
    "normal": ("normal",),
    "dos": ("neptune", "smurf", "back"),
    "probe": ("ipsweep", "portsweep", "satan"),
    "r2l": ("guess_passwd", "warezclient"),
    "u2r": ("buffer_overflow", "rootkit"),
}

_PROTOCOLS = ("tcp", "udp", "icmp")
_SERVICES = ("http", "private", "domain_u", "smtp", "ftp_data", "ftp",
             "telnet", "eco_i", "other", "pop_3", "imap4", "finger")
_FLAGS = ("SF", "S0", "REJ", "RSTR", "RSTO", "SH")

# family-conditional categorical weights (rows sum to 1)
_PROTO_W = {
    "normal": (0.70, 0.22, 0.08),
    "dos": (0.55, 0.05, 0.40),
    "probe": (0.35, 0.25, 0.40),
    "r2l": (0.92, 0.05, 0.03),
    "u2r": (0.95, 0.03, 0.02),
}
_FLAG_W = {
    "normal": (0.85, 0.02, 0.05, 0.03, 0.03, 0.02),
    "dos": (0.15, 0.60, 0.15, 0.05, 0.03, 0.02),
    "probe": (0.25, 0.25, 0.25, 0.10, 0.05, 0.10),
    "r2l": (0.80, 0.03, 0.07, 0.05, 0.03, 0.02),
    "u2r": (0.85, 0.02, 0.05, 0.04, 0.02, 0.02),
}

_N_NUMERIC = 38  # NSL layout minus the three categorical columns


def _family_profiles(separation: float) -> np.ndarray:
    """Per-family mean offsets on a sparse subset of the numeric features."""
    rng = np.random.default_rng(202406)
    profiles = np.zeros((len(_FAMILIES), _N_NUMERIC))
    for f in range(1, len(_FAMILIES)):
        informative = rng.choice(_N_NUMERIC, size=12, replace=False)
        profiles[f, informative] = rng.normal(0.0, separation, size=12)
    # normal traffic gets a mild profile of its own
    informative = rng.choice(_N_NUMERIC, size=8, replace=False)
    profiles[0, informative] = rng.normal(0.0, separation / 2, size=8)
    return profiles


def _service_weights(family_idx: int) -> np.ndarray:
    rng = np.random.default_rng(77 + family_idx)
    w = rng.uniform(0.2, 1.0, size=len(_SERVICES))
    w[rng.choice(len(_SERVICES), size=3, replace=False)] *= 4.0
    return w / w.sum()


def surrogate_traffic_csv(path, rows: int, seed: int, shifted: bool = False,
                          separation: float = 1.0,
                          attack_fraction: float = 0.45) -> Path:
    """Write an NSL-KDD-shaped CSV of synthetic traffic; returns the path.

    ``shifted=True`` reweights the attack families and nudges their profiles
    (a stand-in for the harder official test distribution).
    """
    rng = np.random.default_rng([seed, int(shifted)])
    profiles = _family_profiles(separation)
    if shifted:
        drift = np.random.default_rng(91).normal(0.0, 0.12 * separation,
                                                 size=profiles.shape)
        profiles = profiles + drift
        family_w = np.array([1 - attack_fraction,
                             0.16, 0.12, 0.12, 0.05])
    else:
        family_w = np.array([1 - attack_fraction,
                             0.24, 0.12, 0.06, 0.03])
    family_w = family_w / family_w.sum()
    service_w = np.stack([_service_weights(i) for i in range(len(_FAMILIES))])

    numeric_cols = [c for c in NSL_KDD_FEATURES
                    if c not in ("protocol_type", "service", "flag")]
    lines = []
    for _ in range(rows):
        f = int(rng.choice(len(_FAMILIES), p=family_w))
        family = _FAMILIES[f]
        latent = profiles[f] + rng.normal(0.0, 1.0, size=_N_NUMERIC)

        fields = []
        num_iter = iter(range(_N_NUMERIC))
        for col in NSL_KDD_FEATURES:
            if col == "protocol_type":
                fields.append(str(rng.choice(_PROTOCOLS, p=_PROTO_W[family])))
            elif col == "service":
                fields.append(str(rng.choice(_SERVICES, p=service_w[f])))
            elif col == "flag":
                fields.append(str(rng.choice(_FLAGS, p=_FLAG_W[family])))
            else:
                k = next(num_iter)
                v = latent[k]
                name = numeric_cols[numeric_cols.index(col)]
                if name.endswith("_bytes") or name in ("duration", "count",
                                                       "srv_count", "hot"):
                    fields.append(str(int(np.round(np.exp(2.5 + v)))))
                elif name.endswith("_rate"):
                    fields.append(f"{1.0 / (1.0 + np.exp(-v)):.2f}")
                elif name.startswith(("is_", "logged_", "land", "root_shell",
                                      "su_attempt")):
                    fields.append(str(int(v > 0.8)))
                else:
                    fields.append(f"{v:.4f}")
        label = str(rng.choice(_LABELS[family]))
        difficulty = str(int(rng.integers(0, 22)))
        lines.append(",".join(fields + [label, difficulty]))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
