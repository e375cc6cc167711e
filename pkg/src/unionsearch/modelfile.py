"""Binary persistence for trained models and built indexes.

One little-endian container with a 4-byte magic, a version byte, and a kind
byte. A model file carries the encoder configuration, the tokenizer id, the
projection head (parameters row-major as 32-bit floats), the loss
temperature, and every RNG seed needed to reproduce a run. An index file is
the same model section followed by the full query-side state: hyperplanes,
band configuration, canonical buckets with explicit counts, stored vectors
and token sets, per-column syntactic profiles, and the corpus document
frequencies. Saves are atomic (temp file + rename); loads validate magic,
version, and kind before reading anything else.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import ColumnKey, TOKENIZER_ID
from .encoder import Encoder, EncoderConfig
from .errors import InputError
from .lshindex import CosineLshIndex, MinHashIndex
from .projection import ProjectionHead, TrainConfig, Velocity
from .search import IndexConfig, SearchEngine
from .syntactic import SyntacticProfile, TfidfModel

MAGIC = b"PYLN"
VERSION = 1
KIND_MODEL = 1
KIND_INDEX = 2

_U64_MASK = (1 << 64) - 1


@dataclass
class ModelBundle:
    """Everything the training step produces and the index step consumes."""

    encoder_config: EncoderConfig
    head: ProjectionHead
    train_config: TrainConfig
    strategy: str
    best_epoch: int
    velocity: Velocity | None = None
    tokenizer_id: str = TOKENIZER_ID


class _Writer:
    def __init__(self) -> None:
        self.parts: list[bytes] = []

    def u8(self, v: int) -> None:
        self.parts.append(struct.pack("<B", v))

    def u32(self, v: int) -> None:
        self.parts.append(struct.pack("<I", v))

    def u64(self, v: int) -> None:
        self.parts.append(struct.pack("<Q", v & _U64_MASK))

    def f64(self, v: float) -> None:
        self.parts.append(struct.pack("<d", v))

    def text(self, s: str) -> None:
        raw = s.encode("utf-8")
        self.u32(len(raw))
        self.parts.append(raw)

    def f32_array(self, arr: np.ndarray) -> None:
        a = np.ascontiguousarray(arr, dtype="<f4")
        self.u8(len(a.shape))
        for d in a.shape:
            self.u32(d)
        self.parts.append(a.tobytes())

    def blob(self, raw: bytes) -> None:
        self.u32(len(raw))
        self.parts.append(raw)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise InputError(f"{self.path}: truncated file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def text(self) -> str:
        return self._take(self.u32()).decode("utf-8")

    def f32_array(self) -> np.ndarray:
        ndim = self.u8()
        shape = tuple(self.u32() for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        raw = self._take(count * 4)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

    def blob(self) -> bytes:
        return self._take(self.u32())

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise InputError(f"{self.path}: {len(self.data) - self.pos} "
                             "trailing bytes")


def _atomic_write(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."),
                               prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_model_section(w: _Writer, bundle: ModelBundle) -> None:
    ec = bundle.encoder_config
    w.text(bundle.tokenizer_id)
    w.text(ec.backend)
    w.u32(ec.dim)
    w.u64(ec.hash_seed)
    w.u8(1 if ec.cell_as_single_token else 0)
    w.text(ec.vector_file_path or "")

    in_d, hid_d, out_d = bundle.head.dims
    w.u32(in_d)
    w.u32(hid_d)
    w.u32(out_d)
    w.u64(bundle.head.init_seed)
    for t in bundle.head.tensors():
        w.f32_array(t)

    tc = bundle.train_config
    w.f64(tc.temperature)
    w.f64(tc.learning_rate)
    w.f64(tc.momentum)
    w.u32(tc.epochs)
    w.u32(tc.batch_size)
    w.u32(tc.sample_size)
    w.u64(tc.seed)
    w.f64(tc.validation_fraction)
    w.f64(tc.offline_floor)
    w.text(bundle.strategy)
    w.u32(bundle.best_epoch)

    w.u8(1 if bundle.velocity is not None else 0)
    if bundle.velocity is not None:
        for t in bundle.velocity.tensors():
            w.f32_array(t)


def _read_model_section(r: _Reader) -> ModelBundle:
    tokenizer_id = r.text()
    ec = EncoderConfig(backend=r.text(), dim=r.u32(), hash_seed=r.u64(),
                       cell_as_single_token=bool(r.u8()))
    vec_path = r.text()
    ec.vector_file_path = vec_path or None

    in_d, hid_d, out_d = r.u32(), r.u32(), r.u32()
    init_seed = r.u64()
    W1, b1, W2, b2 = (r.f32_array() for _ in range(4))
    head = ProjectionHead(W1=W1, b1=b1, W2=W2, b2=b2, init_seed=init_seed)
    if head.dims != (in_d, hid_d, out_d):
        raise InputError(f"{r.path}: head dims {head.dims} do not match "
                         f"declared ({in_d}, {hid_d}, {out_d})")

    tc = TrainConfig(temperature=r.f64(), learning_rate=r.f64(),
                     momentum=r.f64(), epochs=r.u32(), batch_size=r.u32(),
                     sample_size=r.u32(), seed=r.u64(),
                     validation_fraction=r.f64(), offline_floor=r.f64())
    strategy = r.text()
    best_epoch = r.u32()
    velocity = None
    if r.u8():
        vW1, vb1, vW2, vb2 = (r.f32_array() for _ in range(4))
        velocity = Velocity(vW1=vW1, vb1=vb1, vW2=vW2, vb2=vb2)
    return ModelBundle(encoder_config=ec, head=head, train_config=tc,
                       strategy=strategy, best_epoch=best_epoch,
                       velocity=velocity, tokenizer_id=tokenizer_id)


def _write_key_table(w: _Writer, keys: list[ColumnKey]) -> dict[ColumnKey, int]:
    w.u32(len(keys))
    for table_id, position in keys:
        w.text(table_id)
        w.u32(position)
    return {key: i for i, key in enumerate(keys)}


def _read_key_table(r: _Reader) -> list[ColumnKey]:
    return [(r.text(), r.u32()) for _ in range(r.u32())]


def _write_buckets(w: _Writer, buckets: list[dict[bytes, list[ColumnKey]]],
                   key_ids: dict[ColumnKey, int]) -> None:
    w.u32(len(buckets))
    for band in buckets:
        w.u32(len(band))
        for bkey in sorted(band):
            w.blob(bkey)
            members = sorted(band[bkey])
            w.u32(len(members))
            for m in members:
                w.u32(key_ids[m])


def _read_buckets(r: _Reader, keys: list[ColumnKey]
                  ) -> list[dict[bytes, list[ColumnKey]]]:
    bands = []
    for _ in range(r.u32()):
        band: dict[bytes, list[ColumnKey]] = {}
        for _ in range(r.u32()):
            bkey = r.blob()
            band[bkey] = [keys[r.u32()] for _ in range(r.u32())]
        bands.append(band)
    return bands


def _write_token_set(w: _Writer, tokens: frozenset[str]) -> None:
    w.u32(len(tokens))
    for tok in sorted(tokens):
        w.text(tok)


def _read_token_set(r: _Reader) -> frozenset[str]:
    return frozenset(r.text() for _ in range(r.u32()))


def _write_minhash(w: _Writer, index: MinHashIndex,
                   key_ids: dict[ColumnKey, int]) -> None:
    w.u32(index.n_perms)
    w.u32(index.n_bands)
    w.u32(index.rows_per_band)
    w.u64(index.seed)
    members = index.keys()
    w.u32(len(members))
    for key in members:
        w.u32(key_ids[key])
        _write_token_set(w, index.token_sets[key])
    _write_buckets(w, index.buckets, key_ids)


def _read_minhash(r: _Reader, keys: list[ColumnKey]) -> MinHashIndex:
    n_perms, n_bands, rows = r.u32(), r.u32(), r.u32()
    index = MinHashIndex(n_perms=n_perms, n_bands=n_bands,
                         rows_per_band=rows, seed=r.u64())
    for _ in range(r.u32()):
        key = keys[r.u32()]
        index.token_sets[key] = _read_token_set(r)
    index.buckets = _read_buckets(r, keys)
    return index


def _write_index_section(w: _Writer, engine: SearchEngine) -> None:
    cfg = engine.index_config
    for v in (cfg.n_planes, cfg.n_bands, cfg.rows_per_band,
              cfg.minhash_perms, cfg.minhash_bands, cfg.minhash_rows,
              cfg.qgram, cfg.top_terms):
        w.u32(v)
    w.u64(cfg.seed)

    keys = sorted(engine.profiles)
    key_ids = _write_key_table(w, keys)

    sem = engine.semantic_index
    w.u32(sem.dim)
    w.u64(sem.seed)
    w.f32_array(sem.planes)
    w.u32(len(sem.vectors))
    for key in sorted(sem.vectors):
        w.u32(key_ids[key])
        w.f32_array(sem.vectors[key])
    _write_buckets(w, sem.buckets, key_ids)

    _write_minhash(w, engine.name_index, key_ids)
    _write_minhash(w, engine.value_index, key_ids)

    for key in keys:
        p = engine.profiles[key]
        _write_token_set(w, p.name_grams)
        _write_token_set(w, p.value_term_set)
        _write_token_set(w, p.format_set)

    w.u32(engine.tfidf.n_columns)
    w.u32(len(engine.tfidf.df))
    for tok in sorted(engine.tfidf.df):
        w.text(tok)
        w.u32(engine.tfidf.df[tok])


def _read_index_section(r: _Reader, bundle: ModelBundle) -> SearchEngine:
    vals = [r.u32() for _ in range(8)]
    cfg = IndexConfig(n_planes=vals[0], n_bands=vals[1], rows_per_band=vals[2],
                      minhash_perms=vals[3], minhash_bands=vals[4],
                      minhash_rows=vals[5], qgram=vals[6], top_terms=vals[7],
                      seed=r.u64())
    keys = _read_key_table(r)

    dim, sem_seed = r.u32(), r.u64()
    planes = r.f32_array()
    sem = CosineLshIndex(dim=dim, n_planes=cfg.n_planes, n_bands=cfg.n_bands,
                         rows_per_band=cfg.rows_per_band, seed=sem_seed,
                         planes=planes)
    for _ in range(r.u32()):
        key = keys[r.u32()]
        sem.vectors[key] = r.f32_array()
    sem.buckets = _read_buckets(r, keys)

    name_index = _read_minhash(r, keys)
    value_index = _read_minhash(r, keys)

    profiles: dict[ColumnKey, SyntacticProfile] = {}
    for key in keys:
        profiles[key] = SyntacticProfile(
            column_key=key, name_grams=_read_token_set(r),
            value_term_set=_read_token_set(r), format_set=_read_token_set(r))

    n_columns = r.u32()
    df = {r.text(): r.u32() for _ in range(r.u32())}
    tfidf = TfidfModel(df=df, n_columns=n_columns)

    encoder = Encoder(bundle.encoder_config)
    return SearchEngine(encoder=encoder, head=bundle.head,
                        semantic_index=sem, name_index=name_index,
                        value_index=value_index, profiles=profiles,
                        tfidf=tfidf, index_config=cfg)


def _serialize(kind: int, bundle: ModelBundle,
               engine: SearchEngine | None) -> bytes:
    w = _Writer()
    w.parts.append(MAGIC)
    w.u8(VERSION)
    w.u8(kind)
    _write_model_section(w, bundle)
    if kind == KIND_INDEX:
        assert engine is not None
        _write_index_section(w, engine)
    return w.getvalue()


def _open(path: str | Path, expected_kind: int) -> _Reader:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    r = _Reader(data, str(path))
    if r._take(4) != MAGIC:
        raise InputError(f"{path}: bad magic, not a model/index file")
    version = r.u8()
    if version != VERSION:
        raise InputError(f"{path}: unsupported version {version}")
    kind = r.u8()
    if kind != expected_kind:
        found = "model" if kind == KIND_MODEL else "index"
        want = "model" if expected_kind == KIND_MODEL else "index"
        raise InputError(f"{path}: this is a {found} file, expected {want}")
    return r


def save_model(path: str | Path, bundle: ModelBundle) -> None:
    _atomic_write(path, _serialize(KIND_MODEL, bundle, None))


def load_model(path: str | Path) -> ModelBundle:
    r = _open(path, KIND_MODEL)
    bundle = _read_model_section(r)
    r.expect_end()
    return bundle


def save_index(path: str | Path, bundle: ModelBundle,
               engine: SearchEngine) -> None:
    _atomic_write(path, _serialize(KIND_INDEX, bundle, engine))


def load_index(path: str | Path) -> tuple[ModelBundle, SearchEngine]:
    r = _open(path, KIND_INDEX)
    bundle = _read_model_section(r)
    engine = _read_index_section(r, bundle)
    r.expect_end()
    return bundle, engine
