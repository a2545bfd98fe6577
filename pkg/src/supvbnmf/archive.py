"""Single-file archives for fitted models, feature sets and coordinates.

An archive is a UTF-8 text header of ``key=value`` lines closed by a line
``END``, followed by raw float64 blocks (row-major, little-endian) in the
order the header's ``blocks`` entry lists them. Floats in the header are
written with ``repr`` so that reading them back is exact. Nothing
time-dependent is stored, so saving the same object twice gives identical
bytes.
"""

import numpy as np

from .baselines import PcaModel
from .supervised import SupervisedHyper, SupervisedModel
from .vbnmf import GammaStats, VbnmfHyper, VbnmfModel

MAGIC = "supvbnmf-archive"
VERSION = 1
_LE = np.dtype("<f8")


class ArchiveError(ValueError):
    pass


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(_fmt(v.item() if hasattr(v, "item") else v) for v in value)
    return str(value)


def write_archive(path, header, blocks):
    """Write ``header`` (dict) and named 2-D ``blocks`` (list of pairs) to ``path``."""
    lines = [f"{MAGIC} {VERSION}"]
    for key, value in header.items():
        text = _fmt(value)
        if "\n" in text or "=" in key:
            raise ArchiveError(f"header entry {key!r} cannot be stored")
        lines.append(f"{key}={text}")
    shapes = []
    for name, arr in blocks:
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        shapes.append(f"{name}:{arr.shape[0]}x{arr.shape[1]}")
    lines.append("blocks=" + ";".join(shapes))
    lines.append("END")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype=_LE).tobytes(order="C"))


def read_archive(path):
    """Return ``(header, blocks)``; header values are left as strings."""
    with open(path, "rb") as fh:
        raw = fh.read()
    marker = b"\nEND\n"
    end = raw.find(marker)
    if end < 0:
        raise ArchiveError(f"{path}: missing END line")
    lines = raw[:end].decode("utf-8").split("\n")
    if not lines or lines[0] != f"{MAGIC} {VERSION}":
        raise ArchiveError(f"{path}: not a version {VERSION} archive")
    header = {}
    for line in lines[1:]:
        key, sep, value = line.partition("=")
        if not sep:
            raise ArchiveError(f"{path}: malformed header line {line!r}")
        header[key] = value
    body = raw[end + len(marker):]
    blocks, offset = {}, 0
    for spec in filter(None, header.pop("blocks", "").split(";")):
        name, _, dims = spec.partition(":")
        rows, cols = (int(v) for v in dims.split("x"))
        n = rows * cols * 8
        if offset + n > len(body):
            raise ArchiveError(f"{path}: truncated block {name}")
        blocks[name] = np.frombuffer(body[offset:offset + n], dtype=_LE).reshape(rows, cols).astype(np.float64)
        offset += n
    if offset != len(body):
        raise ArchiveError(f"{path}: {len(body) - offset} trailing bytes")
    return header, blocks


def _bool(text):
    return text == "true"


def _floats(text):
    return [float(v) for v in text.split(",")] if text else []


def _ints(text):
    return [int(v) for v in text.split(",")] if text else []


def _stats_blocks(prefix, stats):
    out = [(f"E_{prefix}", stats.E), (f"L_{prefix}", stats.L)]
    return out


def _param_blocks(prefix, stats):
    if stats.shape is None:
        return []
    return [(f"shape_{prefix}", np.broadcast_to(stats.shape, stats.E.shape)),
            (f"scale_{prefix}", np.broadcast_to(stats.scale, stats.E.shape))]


def _stats(blocks, prefix):
    shape = blocks.get(f"shape_{prefix}")
    scale = blocks.get(f"scale_{prefix}")
    return GammaStats(blocks[f"E_{prefix}"], blocks[f"L_{prefix}"], shape, scale)


def save_model(path, model):
    """Persist a VbnmfModel, SupervisedModel or PcaModel."""
    if isinstance(model, PcaModel):
        write_archive(path, {"kind": "pca", "n_terms": model.mean.size, "dim": model.dim},
                      [("mean", model.mean), ("basis", model.basis),
                       ("explained_variance", model.explained_variance)])
        return
    supervised = isinstance(model, SupervisedModel)
    h = model.hyper
    header = {
        "kind": "supervised" if supervised else "vbnmf",
        "n_terms": model.n_terms,
        "n_docs": model.n_docs,
        "rank": model.rank,
        "seed": model.seed,
        "iterations": model.iterations_run,
    }
    for name in h.__dataclass_fields__:
        header[name] = getattr(h, name)
    if supervised:
        header["n_labels"] = model.n_labels
        header["labels"] = np.asarray(model.labels).tolist()
    blocks = _stats_blocks("t", model.T) + _stats_blocks("v", model.V)
    if supervised:
        blocks += _stats_blocks("lambda", model.lam)
    blocks += _param_blocks("t", model.T) + _param_blocks("v", model.V)
    if supervised:
        blocks += _param_blocks("lambda", model.lam)
    if model.bound_trace:
        blocks.append(("bound_trace", np.asarray(model.bound_trace)))
    write_archive(path, header, blocks)


def _hyper(cls, header):
    kwargs = {}
    for name, f in cls.__dataclass_fields__.items():
        text = header[name]
        kwargs[name] = _bool(text) if f.type in (bool, "bool") else (
            int(text) if f.type in (int, "int") else float(text))
    return cls(**kwargs)


def load_model(path):
    header, blocks = read_archive(path)
    kind = header.get("kind")
    try:
        if kind == "pca":
            return PcaModel(blocks["mean"][0], blocks["basis"], blocks["explained_variance"][0])
        trace = blocks["bound_trace"][0].tolist() if "bound_trace" in blocks else []
        common = dict(bound_trace=trace, seed=int(header["seed"]),
                      iterations_run=int(header["iterations"]))
        if kind == "vbnmf":
            return VbnmfModel(_stats(blocks, "t"), _stats(blocks, "v"),
                              _hyper(VbnmfHyper, header), **common)
        if kind == "supervised":
            return SupervisedModel(_stats(blocks, "t"), _stats(blocks, "v"),
                                   _stats(blocks, "lambda"), _hyper(SupervisedHyper, header),
                                   np.array(_ints(header["labels"]), dtype=np.int64),
                                   int(header["n_labels"]), **common)
    except KeyError as exc:
        raise ArchiveError(f"{path}: missing entry {exc}") from None
    raise ArchiveError(f"{path}: not a model archive (kind={kind})")


def save_features(path, X_train, X_test, y_train, y_test, n_labels, term_ids, idf):
    write_archive(path, {"kind": "features", "n_labels": n_labels,
                         "y_train": np.asarray(y_train).tolist(),
                         "y_test": np.asarray(y_test).tolist(),
                         "term_ids": np.asarray(term_ids).tolist()},
                  [("X_train", X_train), ("X_test", X_test), ("idf", idf)])


def load_features(path):
    header, blocks = read_archive(path)
    if header.get("kind") != "features":
        raise ArchiveError(f"{path}: not a features archive")
    return {
        "X_train": blocks["X_train"],
        "X_test": blocks["X_test"],
        "idf": blocks["idf"][0],
        "y_train": np.array(_ints(header["y_train"]), dtype=np.int64),
        "y_test": np.array(_ints(header["y_test"]), dtype=np.int64),
        "term_ids": np.array(_ints(header["term_ids"]), dtype=np.int64),
        "n_labels": int(header["n_labels"]),
    }


def save_coords(path, train, test, method):
    write_archive(path, {"kind": "coords", "method": method},
                  [("train", train), ("test", test)])


def load_coords(path):
    header, blocks = read_archive(path)
    if header.get("kind") != "coords":
        raise ArchiveError(f"{path}: not a coordinates archive")
    return header["method"], blocks["train"], blocks["test"]
