"""Dataset ingestion, min-max normalization, sliding windows, synthetic series."""
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

ANOMALY_KINDS = ("spike", "level_shift", "channel_dropout")


class ParseError(ValueError):
    pass


@dataclass
class TimeSeriesDataset:
    values: np.ndarray  # (N, T)
    labels: np.ndarray = None  # (T,) of 0/1
    channel_names: list = None
    norm_stats: tuple = None  # (mins, maxs), each (N,)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D (channels x steps) array")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.n_steps,):
                raise ValueError(f"labels length {self.labels.size} != series length {self.n_steps}")
            if not np.isin(self.labels, (0, 1)).all():
                raise ValueError("labels must be 0/1")
        if self.channel_names is None:
            self.channel_names = [f"ch{i}" for i in range(self.n_channels)]

    @property
    def n_channels(self):
        return self.values.shape[0]

    @property
    def n_steps(self):
        return self.values.shape[1]

    def slice_steps(self, start, stop):
        labels = None if self.labels is None else self.labels[start:stop]
        return replace(self, values=self.values[:, start:stop], labels=labels)


def _parse_rows(lines, path):
    rows = []
    width = None
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        cells = [c.strip() for c in line.split(",")]
        try:
            row = [float(c) for c in cells]
        except ValueError:
            if not rows and lineno == 1:
                yield ("header", cells)
                continue
            raise ParseError(f"{path}:{lineno}: non-numeric cell in {line!r}") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"{path}:{lineno}: expected {width} columns, found {len(row)}")
        rows.append(row)
        yield ("row", (lineno, row))


def load_labels(path):
    labels = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            v = float(line)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric label {line!r}") from None
        if v not in (0.0, 1.0):
            raise ParseError(f"{path}:{lineno}: label must be 0 or 1, got {line!r}")
        labels.append(int(v))
    return np.array(labels, dtype=np.int64)


def load_csv(path, labels_path=None):
    """Read one-row-per-step CSV into a channels x steps dataset."""
    header = None
    rows = []
    for kind, item in _parse_rows(Path(path).read_text().splitlines(), path):
        if kind == "header":
            header = item
        else:
            rows.append(item[1])
    if not rows:
        raise ParseError(f"{path}: no numeric rows")
    values = np.array(rows, dtype=np.float64).T
    if header is not None and len(header) != values.shape[0]:
        raise ParseError(f"{path}:1: header has {len(header)} names for {values.shape[0]} columns")
    labels = None
    if labels_path is not None:
        labels = load_labels(labels_path)
        if labels.size != values.shape[1]:
            raise ParseError(f"{labels_path}:{labels.size}: {labels.size} labels for {values.shape[1]} steps")
    return TimeSeriesDataset(values, labels, header)


def format_value(v):
    # shortest repr round-trips float64 exactly
    return repr(float(v))


def save_csv(ds, path, header=False):
    lines = []
    if header:
        lines.append(",".join(ds.channel_names))
    for col in ds.values.T:
        lines.append(",".join(format_value(v) for v in col))
    Path(path).write_text("\n".join(lines) + "\n")


def save_labels(labels, path):
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


def fit_normalizer(train):
    if train.n_steps < 2:
        raise ValueError("need at least 2 steps to fit normalization")
    return train.values.min(axis=1), train.values.max(axis=1)


def apply_normalizer(ds, norm_stats):
    mins, maxs = (np.asarray(a, dtype=np.float64) for a in norm_stats)
    span = maxs - mins
    const = span <= 0
    scaled = (ds.values - mins[:, None]) / np.where(const, 1.0, span)[:, None]
    scaled[const] = 0.0
    return replace(ds, values=np.clip(scaled, 0.0, 1.0), norm_stats=(mins, maxs))


@dataclass
class WindowSlice:
    end_step: int  # 0-indexed step of the last column
    values: np.ndarray  # (N, l)


def window_end_steps(n_steps, l, stride=1):
    if l < 1 or stride < 1:
        raise ValueError("window length and stride must be >= 1")
    if l > n_steps:
        raise ValueError(f"window length {l} exceeds series length {n_steps}")
    return np.arange(l - 1, n_steps, stride)


def window_array(values, l, stride=1):
    """Stack every window of ``values`` (N, T) into an array (W, N, l)."""
    ends = window_end_steps(values.shape[1], l, stride)
    view = np.lib.stride_tricks.sliding_window_view(values, l, axis=1)  # (N, T-l+1, l)
    return np.ascontiguousarray(view[:, ends - (l - 1), :].transpose(1, 0, 2))


def make_windows(ds, l, stride=1):
    ends = window_end_steps(ds.n_steps, l, stride)
    return [WindowSlice(int(t), ds.values[:, t - l + 1:t + 1]) for t in ends]


@dataclass
class Anomaly:
    start: int
    duration: int
    channels: tuple
    kind: str = "spike"
    magnitude: float = 1.0

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError("anomaly duration must be >= 1")
        if self.kind not in ANOMALY_KINDS:
            raise ValueError(f"unknown anomaly kind {self.kind!r}")
        self.channels = tuple(int(c) for c in self.channels)


@dataclass
class SyntheticSpec:
    n_channels: int
    groups: list  # list of channel lists partitioning range(n_channels)
    length: int
    base_signals: list  # per group (period, amplitude, phase)
    noise_sigma: float = 0.02
    anomalies: list = field(default_factory=list)
    offset: float = 2.0
    phase_jitter: float = 0.3
    scale_jitter: float = 0.2

    def validate(self):
        members = sorted(c for g in self.groups for c in g)
        if members != list(range(self.n_channels)):
            raise ValueError("groups must partition all channels exactly once")
        if len(self.base_signals) != len(self.groups):
            raise ValueError("need one base signal per group")
        if self.noise_sigma < 0 or self.length < 1:
            raise ValueError("noise_sigma must be >= 0 and length >= 1")
        for a in self.anomalies:
            if a.duration < 1:
                raise ValueError("anomaly duration must be >= 1")
            if a.start < 0 or a.start + a.duration > self.length:
                raise ValueError(f"anomaly [{a.start}, {a.start + a.duration}) outside series")
            if any(not 0 <= c < self.n_channels for c in a.channels):
                raise ValueError("anomaly names a channel outside the series")

    def group_of(self):
        out = np.empty(self.n_channels, dtype=np.int64)
        for g, members in enumerate(self.groups):
            out[list(members)] = g
        return out


def generate_synthetic(spec, seed):
    """Grouped sinusoids plus Gaussian noise with planted anomalies.

    Returns ``(dataset, group_of_channel)``.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    t = np.arange(spec.length, dtype=np.float64)
    values = np.empty((spec.n_channels, spec.length))
    amp_of = np.empty(spec.n_channels)
    for members, (period, amplitude, phase) in zip(spec.groups, spec.base_signals):
        for c in members:
            jitter = rng.uniform(-spec.phase_jitter, spec.phase_jitter)
            scale = 1.0 + rng.uniform(-spec.scale_jitter, spec.scale_jitter)
            amp_of[c] = amplitude * scale
            values[c] = spec.offset + amp_of[c] * np.sin(2 * np.pi * t / period + phase + jitter)
    values += spec.noise_sigma * rng.standard_normal(values.shape)
    labels = np.zeros(spec.length, dtype=np.int64)
    for a in spec.anomalies:
        sl = slice(a.start, a.start + a.duration)
        for c in a.channels:
            # spikes and shifts point away from the nearer edge of the channel's range
            sign = -1.0 if values[c, a.start] > spec.offset else 1.0
            if a.kind == "spike":
                # triangular pulse peaking mid-interval
                pulse = 1.0 - np.abs(np.linspace(-1, 1, a.duration + 2)[1:-1])
                values[c, sl] += sign * a.magnitude * amp_of[c] * pulse
            elif a.kind == "level_shift":
                values[c, sl] += sign * a.magnitude * amp_of[c]
            else:
                # stuck sensor: holds the reading from just before the interval
                values[c, sl] = values[c, max(a.start - 1, 0)]
        labels[sl] = 1
    names = [f"ch{i}" for i in range(spec.n_channels)]
    return TimeSeriesDataset(values, labels, names), spec.group_of()


def default_synthetic_spec(n_channels=8, n_groups=2, train_length=4000, test_length=4000,
                           n_anomalies=10, noise_sigma=0.02, seed=0, min_duration=40, max_duration=100):
    """Interleaved channel groups; anomalies planted only after ``train_length``."""
    rng = np.random.default_rng([seed, 1])
    groups = [list(range(g, n_channels, n_groups)) for g in range(n_groups)]
    periods = [37.0 + 23.0 * g for g in range(n_groups)]
    base = [(p, 1.0, float(rng.uniform(0, 2 * np.pi))) for p in periods]
    length = train_length + test_length
    anomalies = []
    if n_anomalies:
        slot = test_length // n_anomalies
        for i in range(n_anomalies):
            kind = ANOMALY_KINDS[i % len(ANOMALY_KINDS)]
            duration = int(rng.integers(min_duration, max(min_duration + 1, min(max_duration, slot - 10)) + 1))
            lo = train_length + i * slot + 5
            start = int(rng.integers(lo, max(lo + 1, train_length + (i + 1) * slot - duration - 5)))
            group = groups[int(rng.integers(n_groups))]
            n_aff = int(rng.integers(1, len(group) + 1))
            chans = sorted(int(c) for c in rng.choice(group, size=n_aff, replace=False))
            magnitude = {"spike": 1.5, "level_shift": 0.8, "channel_dropout": 1.0}[kind]
            anomalies.append(Anomaly(start, duration, tuple(chans), kind, magnitude))
    return SyntheticSpec(n_channels, groups, length, base, noise_sigma, anomalies)


def write_metadata(path, spec, seed, extra=None):
    lines = [f"seed={seed}", f"n_channels={spec.n_channels}", f"length={spec.length}",
             f"noise_sigma={spec.noise_sigma!r}"]
    for g, members in enumerate(spec.groups):
        lines.append(f"group.{g}={' '.join(map(str, members))}")
    for i, a in enumerate(spec.anomalies):
        lines.append(f"anomaly.{i}={a.start} {a.duration} {a.kind} {a.magnitude!r} "
                     f"{' '.join(map(str, a.channels))}")
    for k, v in (extra or {}).items():
        lines.append(f"{k}={v}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_metadata(path):
    meta = {}
    for line in Path(path).read_text().splitlines():
        if line.strip() and not line.startswith("#"):
            k, _, v = line.partition("=")
            meta[k.strip()] = v.strip()
    return meta


def groups_from_metadata(meta):
    groups = []
    g = 0
    while f"group.{g}" in meta:
        groups.append([int(c) for c in meta[f"group.{g}"].split()])
        g += 1
    return groups
