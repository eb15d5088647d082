import numpy as np
import pytest

from learnsel.cache import (
    DimMismatch,
    EmbeddingCache,
    pack_header,
    pack_record,
    read_header,
    verify_cache_dir,
)
from learnsel.core import ConflictingVector, CorruptShard, ValueOutOfRange, content_hash, Side


def unit_vec(rng, dim):
    v = rng.normal(size=dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


@pytest.fixture
def rng():
    return np.random.default_rng(404)


def key(i: int) -> bytes:
    return content_hash(f"sentence {i}", Side.SOURCE)


class TestPutGet:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        cache = EmbeddingCache(tmp_path)
        vec = unit_vec(rng, 16)
        cache.put("m", key(0), vec)
        got = cache.get("m", key(0))
        assert got.tobytes() == vec.tobytes()

    def test_unknown_key_is_a_miss(self, tmp_path):
        cache = EmbeddingCache(tmp_path)
        assert cache.get("m", key(1)) is None
        assert cache.stats.misses == 1
        assert cache.stats.hits == 0

    def test_hit_and_miss_counters_partition_lookups(self, tmp_path, rng):
        cache = EmbeddingCache(tmp_path)
        cache.put("m", key(0), unit_vec(rng, 8))
        cache.get("m", key(0))
        cache.get("m", key(1))
        cache.get("m", key(0))
        assert cache.stats.hits + cache.stats.misses == 3
        assert cache.stats.hits == 2

    def test_idempotent_put(self, tmp_path, rng):
        cache = EmbeddingCache(tmp_path)
        vec = unit_vec(rng, 8)
        cache.put("m", key(0), vec)
        cache.put("m", key(0), vec.copy())
        assert cache.stats.stored_vectors == 1

    def test_conflicting_vector_rejected(self, tmp_path, rng):
        cache = EmbeddingCache(tmp_path)
        cache.put("m", key(0), unit_vec(rng, 8))
        with pytest.raises(ConflictingVector):
            cache.put("m", key(0), unit_vec(rng, 8))

    def test_dim_mismatch_rejected(self, tmp_path, rng):
        cache = EmbeddingCache(tmp_path)
        cache.register_model("m", 1024)
        with pytest.raises(DimMismatch):
            cache.put("m", key(0), unit_vec(rng, 512))

    def test_non_unit_vector_rejected(self, tmp_path):
        cache = EmbeddingCache(tmp_path)
        with pytest.raises(ValueOutOfRange):
            cache.put("m", key(0), np.full(8, 0.5, dtype=np.float32))

    def test_persistence_across_reopen(self, tmp_path, rng):
        vec = unit_vec(rng, 32)
        first = EmbeddingCache(tmp_path)
        first.put("m", key(0), vec)
        first.close()
        second = EmbeddingCache(tmp_path)
        got = second.get("m", key(0))
        assert got.tobytes() == vec.tobytes()

    def test_reopen_without_index_rebuilds(self, tmp_path, rng):
        vec = unit_vec(rng, 32)
        first = EmbeddingCache(tmp_path)
        first.put("m", key(0), vec)
        first.close()
        (tmp_path / "index.json").unlink()
        second = EmbeddingCache(tmp_path)
        assert second.get("m", key(0)).tobytes() == vec.tobytes()

    def test_stale_index_detected_and_rebuilt(self, tmp_path, rng):
        first = EmbeddingCache(tmp_path)
        first.put("m", key(0), unit_vec(rng, 8))
        first.close()
        # Second writer appends after the index snapshot was taken.
        second = EmbeddingCache(tmp_path)
        second.put("m", key(1), unit_vec(rng, 8))
        # A third open sees an index whose recorded sizes disagree.
        third = EmbeddingCache(tmp_path)
        assert third.get("m", key(0)) is not None
        assert third.get("m", key(1)) is not None

    def test_two_models_coexist(self, tmp_path, rng):
        cache = EmbeddingCache(tmp_path)
        cache.put("learner-1024", key(0), unit_vec(rng, 1024))
        cache.put("ref-512", key(0), unit_vec(rng, 512))
        assert cache.get("learner-1024", key(0)).shape == (1024,)
        assert cache.get("ref-512", key(0)).shape == (512,)


class TestBatchLookup:
    def test_all_present(self, tmp_path, rng):
        cache = EmbeddingCache(tmp_path)
        keys = [key(i) for i in range(4)]
        for k in keys:
            cache.put("m", k, unit_vec(rng, 8))
        found, missing = cache.batch_lookup("m", keys)
        assert missing == []
        assert set(found) == set(keys)

    def test_none_present(self, tmp_path):
        cache = EmbeddingCache(tmp_path)
        keys = [key(i) for i in range(3)]
        found, missing = cache.batch_lookup("m", keys)
        assert found == {}
        assert missing == keys  # input order preserved

    def test_partition(self, tmp_path, rng):
        cache = EmbeddingCache(tmp_path)
        keys = [key(i) for i in range(6)]
        for k in keys[::2]:
            cache.put("m", k, unit_vec(rng, 8))
        found, missing = cache.batch_lookup("m", keys)
        assert len(found) + len(missing) == len(keys)
        assert missing == keys[1::2]


class TestCrashSafety:
    def test_truncation_never_corrupts_committed_records(self, tmp_path, rng):
        vecs = {key(i): unit_vec(rng, 12) for i in range(8)}
        cache = EmbeddingCache(tmp_path)
        for k, v in vecs.items():
            cache.put("m", k, v)
        cache.close()
        shard = next(tmp_path.rglob("*.embc"))
        full = shard.read_bytes()
        header = read_header(full, shard)
        record_size = 32 + 12 * 4 + 4
        # Cut the file mid-record at every possible boundary offset.
        for cut in range(header.header_size + 1, len(full), 7):
            shard.write_bytes(full[:cut])
            (tmp_path / "index.json").unlink(missing_ok=True)
            reopened = EmbeddingCache(tmp_path)
            committed = (cut - header.header_size) // record_size
            intact = 0
            for k, v in vecs.items():
                got = reopened.get("m", k)
                if got is not None:
                    assert got.tobytes() == v.tobytes()
                    intact += 1
            assert intact == committed
        shard.write_bytes(full)

    def test_verify_flags_bit_flip(self, tmp_path, rng):
        cache = EmbeddingCache(tmp_path)
        for i in range(4):
            cache.put("m", key(i), unit_vec(rng, 12))
        cache.close()
        shard = next(tmp_path.rglob("*.embc"))
        data = bytearray(shard.read_bytes())
        data[-10] ^= 0xFF  # corrupt inside the last record's vector
        shard.write_bytes(bytes(data))
        report = verify_cache_dir(tmp_path)
        assert report.checksum_failures == 1
        assert report.records == 3
        assert not report.ok

    def test_get_raises_on_checksum_failure(self, tmp_path, rng):
        cache = EmbeddingCache(tmp_path)
        cache.put("m", key(0), unit_vec(rng, 12))
        cache.close()
        shard = next(tmp_path.rglob("*.embc"))
        data = bytearray(shard.read_bytes())
        data[-10] ^= 0xFF
        shard.write_bytes(bytes(data))
        (tmp_path / "index.json").unlink()
        reopened = EmbeddingCache(tmp_path)
        with pytest.raises(CorruptShard):
            reopened.get("m", key(0))


class TestVerifyCompact:
    def test_verify_clean_store(self, tmp_path, rng):
        cache = EmbeddingCache(tmp_path)
        for i in range(5):
            cache.put("m", key(i), unit_vec(rng, 8))
        cache.close()
        report = verify_cache_dir(tmp_path)
        assert report.ok
        assert report.records == 5
        assert report.truncated_tails == 0

    def test_verify_counts_truncated_tail(self, tmp_path, rng):
        cache = EmbeddingCache(tmp_path)
        for i in range(3):
            cache.put("m", key(i), unit_vec(rng, 8))
        cache.close()
        shard = next(tmp_path.rglob("*.embc"))
        shard.write_bytes(shard.read_bytes()[:-5])
        report = verify_cache_dir(tmp_path)
        assert report.records == 2
        assert report.truncated_tails == 1
        assert report.ok  # torn tail is uncommitted, not corruption

    def test_compact_drops_tail_and_keeps_vectors(self, tmp_path, rng):
        vecs = {key(i): unit_vec(rng, 8) for i in range(4)}
        cache = EmbeddingCache(tmp_path)
        for k, v in vecs.items():
            cache.put("m", k, v)
        cache.close()
        shard = next(tmp_path.rglob("*.embc"))
        shard.write_bytes(shard.read_bytes()[:-3])
        (tmp_path / "index.json").unlink()
        store = EmbeddingCache(tmp_path)
        kept = store.compact()
        store.close()
        assert kept == 3
        report = verify_cache_dir(tmp_path)
        assert report.ok and report.records == 3 and report.truncated_tails == 0
        reopened = EmbeddingCache(tmp_path)
        for k, v in list(vecs.items())[:3]:
            got = reopened.get("m", k)
            if got is not None:
                assert got.tobytes() == v.tobytes()


class TestShardFormat:
    def test_header_round_trip(self, tmp_path):
        buf = pack_header("some-model", 512)
        header = read_header(buf, tmp_path / "x.embc")
        assert header.model_id == "some-model"
        assert header.dim == 512

    def test_header_layout_is_pinned(self):
        # magic, version LE, id length LE, id bytes, dim LE: the exporter
        # writes this byte-for-byte.
        buf = pack_header("ab", 3)
        assert buf == b"EMBC" + b"\x01\x00" + b"\x02\x00" + b"ab" + b"\x03\x00\x00\x00"

    def test_record_layout_is_pinned(self):
        import struct
        import zlib

        k = bytes(range(32))
        vec = np.array([1.0, 0.0], dtype="<f4")
        rec = pack_record(k, vec)
        assert rec[:32] == k
        assert rec[32:40] == vec.tobytes()
        (crc,) = struct.unpack("<I", rec[40:])
        assert crc == zlib.crc32(rec[:40]) & 0xFFFFFFFF

    def test_bad_magic_rejected(self, tmp_path):
        with pytest.raises(CorruptShard):
            read_header(b"NOPE" + b"\x00" * 16, tmp_path / "x.embc")
