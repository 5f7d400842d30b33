"""
LIBSVM text format: one example per line, `label idx:value idx:value ...`
with 1-based, strictly increasing feature indices.

scikit-learn's svmlight reader and writer do the conversion. A validation
pass in front of the reader reports malformed input with its line number.
"""
import io
import logging
import math
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, List, Optional, Union

import numpy as np
from scipy import sparse
from sklearn.datasets import dump_svmlight_file, load_svmlight_file

from ..errors import InvalidParameterError, LibSVMParseError

logger = logging.getLogger(__name__)

# accepted label spellings, 0/1 mapped to -1/+1
LABELS = {-1.0: -1.0, 1.0: 1.0, 0.0: -1.0}


@dataclass(frozen=True, eq=False)
class LibSVMDataset:
    features: sparse.csr_matrix = field(repr=False)
    labels: np.ndarray = field(repr=False)

    @property
    def n_examples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def _parse_label(token: str, line_number: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise LibSVMParseError(line_number, f"label {token!r} is not a number")
    if value not in LABELS:
        raise LibSVMParseError(line_number, f"label {token!r} is not -1/+1 or 0/1")
    return LABELS[value]


def _parse_feature(token: str, line_number: int):
    index_text, sep, value_text = token.partition(":")
    if not sep:
        raise LibSVMParseError(line_number, f"token {token!r} is not index:value")
    try:
        index = int(index_text)
    except ValueError:
        raise LibSVMParseError(line_number, f"feature index {index_text!r} is not an integer")
    try:
        value = float(value_text)
    except ValueError:
        raise LibSVMParseError(line_number, f"feature value {value_text!r} is not a number")
    if index < 1:
        raise LibSVMParseError(line_number, f"feature index {index} must be >= 1")
    if not math.isfinite(value):
        raise LibSVMParseError(line_number, f"feature value {value_text!r} is not finite")
    return index, value


def _decode(raw: Union[str, bytes], line_number: int) -> str:
    if isinstance(raw, str):
        return raw
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        raise LibSVMParseError(line_number, "invalid UTF-8")


def _validated_lines(lines, n_features: Optional[int]):
    """Check every line and yield (label, kept index:value tokens) in canonical form"""
    for line_number, raw in enumerate(lines, start=1):
        line = _decode(raw, line_number).split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        label = _parse_label(tokens[0], line_number)
        kept = []
        previous = 0
        for token in tokens[1:]:
            index, value = _parse_feature(token, line_number)
            if index <= previous:
                raise LibSVMParseError(line_number, f"feature index {index} does not increase after {previous}")
            previous = index
            if n_features is None or index <= n_features:
                kept.append((index, value))
        yield label, kept


def parse_libsvm(lines: Iterable[Union[str, bytes]], n_features: Optional[int] = None) -> LibSVMDataset:
    """
    Parse LIBSVM lines into a CSR matrix and +-1 labels.

    Lines may be text or UTF-8 bytes. Blank lines and `#` comments are
    skipped. With n_features set, indices beyond it are dropped and the
    matrix has exactly n_features columns; otherwise the width is the
    largest index seen.
    """
    if n_features is not None and n_features < 1:
        raise InvalidParameterError("feature cap must be positive")
    buffer = io.StringIO()
    n_examples = 0
    max_index = 0
    for label, kept in _validated_lines(lines, n_features):
        tokens = [repr(label)] + [f"{index}:{value!r}" for index, value in kept]
        buffer.write(" ".join(tokens) + "\n")
        n_examples += 1
        if kept:
            max_index = max(max_index, kept[-1][0])

    width = n_features if n_features is not None else max_index
    if n_examples == 0:
        features, labels = sparse.csr_matrix((0, width)), np.zeros(0)
    else:
        # the reader wants at least one column
        X, y = load_svmlight_file(
            io.BytesIO(buffer.getvalue().encode("ascii")), n_features=max(width, 1), zero_based=False,
        )
        features, labels = X[:, :width].tocsr(), np.asarray(y, dtype=float)
    logger.info(f"Parsed {n_examples} examples with {width} features")
    return LibSVMDataset(features=features, labels=labels)


def load_libsvm(path: str, n_features: Optional[int] = None) -> LibSVMDataset:
    with open(path, "rb") as f:
        return parse_libsvm(f, n_features=n_features)


def dump_libsvm(dataset: LibSVMDataset, stream: BinaryIO):
    """Write a dataset in LIBSVM format with 1-based indices and +-1 labels"""
    labels = np.where(dataset.labels > 0, 1.0, -1.0)
    dump_svmlight_file(dataset.features, labels, stream, zero_based=False)


def partition(dataset: LibSVMDataset, M: int) -> List[LibSVMDataset]:
    """Contiguous shards whose sizes differ by at most one, larger shards first"""
    if M < 1:
        raise InvalidParameterError("at least one shard is required")
    if M > dataset.n_examples:
        raise InvalidParameterError(f"cannot split {dataset.n_examples} examples over {M} workers")
    bounds = np.cumsum([0] + [len(block) for block in np.array_split(np.arange(dataset.n_examples), M)])
    return [
        LibSVMDataset(features=dataset.features[lo:hi], labels=dataset.labels[lo:hi].copy())
        for lo, hi in zip(bounds[:-1], bounds[1:])
    ]
