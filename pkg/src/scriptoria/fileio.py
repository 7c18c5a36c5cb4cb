"""Binary artifact formats and atomic file writes.

All formats are little-endian with a 4-byte ASCII magic and a u16 version:

``LDSC``  local descriptors, one file per image:
          magic, version u16, count u32, dim u32, f32 row-major matrix.
``GDSC``  global descriptors: magic, version u16, count u32, dim u32,
          then per record a u16-length-prefixed UTF-8 image id and the
          f32 vector.
``SPTC``  patch stack: magic, version u16, count u32, side u16,
          bytes-per-pixel u8, then row-major 8-bit patches.
``SLBL``  surrogate labels: magic, count u32, u32 labels. (This header
          carries no version field.)
``SVMW``  linear SVM weights: magic, version u16, dim u32, C f64,
          f32 weight vector.
``CDBK``  codebook: magic, version u16, K u32, dim u32, seed i64,
          f64 centers, u64 counts, u8 whitening-present flag, optional
          embedded ``WHTN`` section.
``WHTN``  whitening section: magic, version u16, in_dim u32, out_dim u32,
          epsilon f64, f64 mean, f64 basis (in_dim x out_dim), f64 scale,
          u8 clamped flags.
``MVLD``  encoder model: magic, version u16, kind u8 (0 sum, 1 vlad,
          2 mvlad), n_codebooks u8, power exponent f64, u8 whitening flag,
          embedded CDBK sections, optional WHTN section.

Every top-level artifact may end with a ``CFGH`` footer (magic + u64
config hash). Readers tolerate its absence so files produced by other
tools remain readable.
"""

from __future__ import annotations

import os
import struct
import tempfile
from contextlib import contextmanager

import numpy as np

from .exceptions import FormatError

FORMAT_VERSION = 1
_HASH_MAGIC = b"CFGH"


@contextmanager
def atomic_write(path):
    """Write to a temp file in the target directory, then rename over."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _expect_magic(fh, magic, path):
    got = fh.read(4)
    if got != magic:
        raise FormatError(
            f"{path}: bad magic {got!r}, expected {magic.decode()!r}")


def _expect_version(fh, path):
    (version,) = struct.unpack("<H", fh.read(2))
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return version


def _read_exact(fh, n, path, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"{path}: truncated while reading {what}")
    return buf


def _write_hash_footer(fh, config_hash):
    if config_hash is not None:
        fh.write(_HASH_MAGIC)
        fh.write(struct.pack("<Q", int(config_hash) & 0xFFFFFFFFFFFFFFFF))


def _read_hash_footer(fh):
    tail = fh.read(12)
    if len(tail) == 12 and tail[:4] == _HASH_MAGIC:
        return struct.unpack("<Q", tail[4:])[0]
    return None


# ---------------------------------------------------------------- LDSC

def write_ldsc(path, descriptors, config_hash=None):
    X = np.ascontiguousarray(descriptors, dtype="<f4")
    if X.ndim != 2:
        raise ValueError("descriptors must be a 2-D array")
    with atomic_write(path) as fh:
        fh.write(b"LDSC")
        fh.write(struct.pack("<HII", FORMAT_VERSION, X.shape[0], X.shape[1]))
        fh.write(X.tobytes())
        _write_hash_footer(fh, config_hash)


def read_ldsc(path):
    """Returns (descriptors float32 (n, d), config_hash or None)."""
    with open(path, "rb") as fh:
        _expect_magic(fh, b"LDSC", path)
        _expect_version(fh, path)
        count, dim = struct.unpack("<II", _read_exact(fh, 8, path, "header"))
        if dim == 0:
            raise FormatError(f"{path}: zero descriptor dimension")
        raw = _read_exact(fh, count * dim * 4, path, "descriptor data")
        X = np.frombuffer(raw, dtype="<f4").reshape(count, dim)
        return X.copy(), _read_hash_footer(fh)


# ---------------------------------------------------------------- GDSC

def write_gdsc(path, image_ids, encodings, config_hash=None):
    X = np.ascontiguousarray(encodings, dtype="<f4")
    if X.ndim != 2 or len(image_ids) != X.shape[0]:
        raise ValueError("encodings and image_ids must align")
    with atomic_write(path) as fh:
        fh.write(b"GDSC")
        fh.write(struct.pack("<HII", FORMAT_VERSION, X.shape[0], X.shape[1]))
        for image_id, row in zip(image_ids, X):
            encoded = image_id.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ValueError(f"image id too long: {image_id[:40]}...")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(row.tobytes())
        _write_hash_footer(fh, config_hash)


def read_gdsc(path):
    """Returns (image_ids list, encodings float32 (n, d), hash or None)."""
    with open(path, "rb") as fh:
        _expect_magic(fh, b"GDSC", path)
        _expect_version(fh, path)
        count, dim = struct.unpack("<II", _read_exact(fh, 8, path, "header"))
        ids, rows = [], np.empty((count, dim), dtype=np.float32)
        for i in range(count):
            (idlen,) = struct.unpack("<H", _read_exact(fh, 2, path, "id length"))
            ids.append(_read_exact(fh, idlen, path, "image id").decode("utf-8"))
            raw = _read_exact(fh, dim * 4, path, "encoding")
            rows[i] = np.frombuffer(raw, dtype="<f4")
        return ids, rows, _read_hash_footer(fh)


# ---------------------------------------------------------------- SPTC

def write_sptc(path, patches, config_hash=None):
    P = np.ascontiguousarray(patches, dtype=np.uint8)
    if P.ndim != 3 or P.shape[1] != P.shape[2]:
        raise ValueError("patches must be (n, side, side)")
    with atomic_write(path) as fh:
        fh.write(b"SPTC")
        fh.write(struct.pack("<HIHB", FORMAT_VERSION, P.shape[0], P.shape[1], 1))
        fh.write(P.tobytes())
        _write_hash_footer(fh, config_hash)


def read_sptc(path):
    """Returns (patches uint8 (n, side, side), config_hash or None)."""
    with open(path, "rb") as fh:
        _expect_magic(fh, b"SPTC", path)
        _expect_version(fh, path)
        count, side, bpp = struct.unpack(
            "<IHB", _read_exact(fh, 7, path, "header"))
        if bpp != 1:
            raise FormatError(f"{path}: unsupported bytes-per-pixel {bpp}")
        raw = _read_exact(fh, count * side * side, path, "patch data")
        P = np.frombuffer(raw, dtype=np.uint8).reshape(count, side, side)
        return P.copy(), _read_hash_footer(fh)


# ---------------------------------------------------------------- SLBL

def write_slbl(path, labels, config_hash=None):
    raw = np.asarray(labels)
    if raw.ndim != 1:
        raise ValueError("labels must be 1-D")
    if raw.size and (np.any(raw < 0) or np.any(raw > 0xFFFFFFFF)):
        raise ValueError("labels must fit in an unsigned 32-bit integer")
    labels = np.ascontiguousarray(raw, dtype="<u4")
    with atomic_write(path) as fh:
        fh.write(b"SLBL")
        fh.write(struct.pack("<I", labels.shape[0]))
        fh.write(labels.tobytes())
        _write_hash_footer(fh, config_hash)


def read_slbl(path):
    """Returns (labels int64 array, config_hash or None)."""
    with open(path, "rb") as fh:
        _expect_magic(fh, b"SLBL", path)
        (count,) = struct.unpack("<I", _read_exact(fh, 4, path, "count"))
        raw = _read_exact(fh, count * 4, path, "labels")
        labels = np.frombuffer(raw, dtype="<u4").astype(np.int64)
        return labels, _read_hash_footer(fh)


# ---------------------------------------------------------------- SVMW

def write_svmw(path, weights, C, config_hash=None):
    w = np.ascontiguousarray(weights, dtype="<f4")
    if w.ndim != 1:
        raise ValueError("weights must be 1-D")
    with atomic_write(path) as fh:
        fh.write(b"SVMW")
        fh.write(struct.pack("<HId", FORMAT_VERSION, w.shape[0], float(C)))
        fh.write(w.tobytes())
        _write_hash_footer(fh, config_hash)


def read_svmw(path):
    """Returns (weights float32, C, config_hash or None)."""
    with open(path, "rb") as fh:
        _expect_magic(fh, b"SVMW", path)
        _expect_version(fh, path)
        dim, C = struct.unpack("<Id", _read_exact(fh, 12, path, "header"))
        raw = _read_exact(fh, dim * 4, path, "weights")
        return np.frombuffer(raw, dtype="<f4").copy(), C, _read_hash_footer(fh)


# ------------------------------------------------- embedded sections

def _write_whitening_section(fh, whitener):
    fh.write(b"WHTN")
    fh.write(struct.pack("<HII", FORMAT_VERSION,
                         whitener.in_dim_, whitener.out_dim_))
    fh.write(struct.pack("<d", whitener.epsilon))
    fh.write(np.ascontiguousarray(whitener.mean_, dtype="<f8").tobytes())
    fh.write(np.ascontiguousarray(whitener.components_, dtype="<f8").tobytes())
    fh.write(np.ascontiguousarray(whitener.scale_, dtype="<f8").tobytes())
    fh.write(np.ascontiguousarray(whitener.clamped_, dtype=np.uint8).tobytes())


def _read_whitening_section(fh, path):
    from .whitening import PCAWhitener

    _expect_magic(fh, b"WHTN", path)
    _expect_version(fh, path)
    in_dim, out_dim = struct.unpack("<II", _read_exact(fh, 8, path, "dims"))
    (epsilon,) = struct.unpack("<d", _read_exact(fh, 8, path, "epsilon"))
    mean = np.frombuffer(
        _read_exact(fh, in_dim * 8, path, "mean"), dtype="<f8").copy()
    basis = np.frombuffer(
        _read_exact(fh, in_dim * out_dim * 8, path, "basis"),
        dtype="<f8").reshape(in_dim, out_dim).copy()
    scale = np.frombuffer(
        _read_exact(fh, out_dim * 8, path, "scale"), dtype="<f8").copy()
    clamped = np.frombuffer(
        _read_exact(fh, out_dim, path, "clamped"), dtype=np.uint8
    ).astype(bool)

    w = PCAWhitener(n_components=out_dim, epsilon=epsilon)
    w.in_dim_ = in_dim
    w.out_dim_ = out_dim
    w.mean_ = mean
    w.components_ = basis
    w.scale_ = scale
    w.clamped_ = clamped
    w.eigenvalues_ = 1.0 / np.maximum(scale, 1e-300) ** 2
    return w


def _write_codebook_section(fh, kmeans):
    centers = np.ascontiguousarray(kmeans.cluster_centers_, dtype="<f8")
    counts = np.ascontiguousarray(kmeans.counts_, dtype="<u8")
    fh.write(b"CDBK")
    fh.write(struct.pack("<HIIq", FORMAT_VERSION,
                         centers.shape[0], centers.shape[1], int(kmeans.seed)))
    fh.write(centers.tobytes())
    fh.write(counts.tobytes())


def _read_codebook_section(fh, path):
    from .clustering import MiniBatchKMeans

    _expect_magic(fh, b"CDBK", path)
    _expect_version(fh, path)
    k, dim, seed = struct.unpack("<IIq", _read_exact(fh, 16, path, "header"))
    centers = np.frombuffer(
        _read_exact(fh, k * dim * 8, path, "centers"),
        dtype="<f8").reshape(k, dim).copy()
    counts = np.frombuffer(
        _read_exact(fh, k * 8, path, "counts"), dtype="<u8"
    ).astype(np.int64)

    km = MiniBatchKMeans(n_clusters=k, seed=seed)
    km.cluster_centers_ = centers
    km.counts_ = counts
    km.n_features_in_ = dim
    return km


def write_codebook(path, kmeans, whitener=None, config_hash=None):
    """Codebook file, with the local-descriptor whitening embedded."""
    with atomic_write(path) as fh:
        _write_codebook_section(fh, kmeans)
        fh.write(struct.pack("<B", 1 if whitener is not None else 0))
        if whitener is not None:
            _write_whitening_section(fh, whitener)
        _write_hash_footer(fh, config_hash)


def read_codebook(path):
    """Returns (kmeans, whitener or None, config_hash or None)."""
    with open(path, "rb") as fh:
        km = _read_codebook_section(fh, path)
        (has_whitening,) = struct.unpack("<B", _read_exact(fh, 1, path, "flag"))
        whitener = _read_whitening_section(fh, path) if has_whitening else None
        return km, whitener, _read_hash_footer(fh)


def write_encoder_model(path, encoder, config_hash=None):
    """Serialize a fitted Sum/Vlad/MVlad encoder (see encoding module)."""
    from .encoding import MVladEncoder, SumEncoder, VladEncoder

    with atomic_write(path) as fh:
        fh.write(b"MVLD")
        if isinstance(encoder, SumEncoder):
            fh.write(struct.pack("<HBBdB", FORMAT_VERSION, 0, 0, 1.0, 0))
            fh.write(struct.pack("<I", encoder.dim_))
        elif isinstance(encoder, VladEncoder):
            fh.write(struct.pack("<HBBdB", FORMAT_VERSION, 1, 1,
                                 encoder.power_exponent, 0))
            _write_codebook_section(fh, encoder.kmeans_)
        elif isinstance(encoder, MVladEncoder):
            whitened = encoder.whitener_ is not None
            fh.write(struct.pack("<HBBdB", FORMAT_VERSION, 2,
                                 len(encoder.codebooks_),
                                 encoder.power_exponent, int(whitened)))
            for km in encoder.codebooks_:
                _write_codebook_section(fh, km)
            if whitened:
                _write_whitening_section(fh, encoder.whitener_)
        else:
            raise ValueError(f"cannot serialize encoder {type(encoder)!r}")
        _write_hash_footer(fh, config_hash)


def read_encoder_model(path):
    """Returns (fitted encoder, config_hash or None)."""
    from .encoding import MVladEncoder, SumEncoder, VladEncoder

    with open(path, "rb") as fh:
        _expect_magic(fh, b"MVLD", path)
        _expect_version(fh, path)
        kind, n_books, exponent, whitened = struct.unpack(
            "<BBdB", _read_exact(fh, 11, path, "header"))
        if kind == 0:
            (dim,) = struct.unpack("<I", _read_exact(fh, 4, path, "dim"))
            enc = SumEncoder()
            enc.dim_ = dim
        elif kind == 1:
            km = _read_codebook_section(fh, path)
            enc = VladEncoder(n_clusters=km.n_clusters,
                              power_exponent=exponent, seed=km.seed)
            enc.kmeans_ = km
            enc.dim_ = km.n_features_in_
        elif kind == 2:
            books = [_read_codebook_section(fh, path) for _ in range(n_books)]
            enc = MVladEncoder(n_codebooks=n_books,
                               n_clusters=books[0].n_clusters,
                               power_exponent=exponent,
                               whiten=bool(whitened),
                               seed=books[0].seed)
            enc.codebooks_ = books
            enc.whitener_ = _read_whitening_section(fh, path) if whitened \
                else None
            enc.dim_ = books[0].n_features_in_
        else:
            raise FormatError(f"{path}: unknown encoder kind {kind}")
        return enc, _read_hash_footer(fh)
