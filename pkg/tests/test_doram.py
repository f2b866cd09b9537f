import numpy as np
import pytest

from secknn.doram import (BlockLayout, MaskedDb, ShakePrf, dpf_eval_full, dpf_gen, dpf_gen_from_aggregates,
                          doram_init, doram_read, multi_read, new_key, prf_cost, prf_table_rows, prg, select_xor)


def indicator(pair):
    return dpf_eval_full(pair.a) ^ dpf_eval_full(pair.b)


@pytest.mark.parametrize("depth,i", [(0, 0), (1, 0), (1, 1), (10, 777), (12, 4095), (12, 0), (16, 40_000)])
def test_dpf_point(depth, i):
    rng = np.random.default_rng(depth)
    u = indicator(dpf_gen(i, depth, rng))
    assert u.size == 1 << depth
    assert u[i] == 1 and u.sum() == 1


def test_dpf_every_index_small_domain():
    rng = np.random.default_rng(1)
    for i in range(64):
        u = indicator(dpf_gen(i, 6, rng))
        assert np.flatnonzero(u).tolist() == [i]


def test_dpf_large_depth():
    rng = np.random.default_rng(2)
    i = int(rng.integers(1 << 20))
    u = indicator(dpf_gen(i, 20, rng))
    assert np.flatnonzero(u).tolist() == [i]


def test_dpf_bad_arguments():
    rng = np.random.default_rng(3)
    with pytest.raises(ValueError):
        dpf_gen(8, 3, rng)
    with pytest.raises(ValueError):
        dpf_gen(0, 31, rng)


def test_path_generation_matches_full_aggregates():
    # the dealer's path-only shortcut and the party-side aggregate route must
    # produce the same correction words from the same roots
    for s in range(20):
        rng = np.random.default_rng(s)
        depth = int(rng.integers(1, 11))
        i = int(rng.integers(1 << depth))
        roots = np.random.default_rng(s).integers(0, 256, (2, 16), dtype=np.uint8)
        a = dpf_gen(i, depth, np.random.default_rng(s))
        b = dpf_gen_from_aggregates(i, depth, roots)
        assert a.a.root == b.a.root and a.b.root == b.b.root
        assert np.array_equal(a.a.cw_seed, b.a.cw_seed) and np.array_equal(a.a.cw_t, b.a.cw_t)


def test_single_key_looks_random():
    # one party's leaf bits alone carry no visible trace of the index
    rng = np.random.default_rng(4)
    bits = dpf_eval_full(dpf_gen(5, 14, rng).a)
    ones = int(bits.sum())
    n = bits.size
    assert abs(ones - n / 2) < 5 * np.sqrt(n / 4)
    other = dpf_eval_full(dpf_gen(9000, 14, rng).a)
    assert abs(int((bits ^ other).sum()) - n / 2) < 5 * np.sqrt(n / 4)


def test_prg_deterministic_and_clears_low_bit():
    seeds = np.random.default_rng(5).integers(0, 256, (100, 16), dtype=np.uint8)
    a = prg(seeds)
    b = prg(seeds.copy())
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not (a[0][:, 0] & 1).any() and not (a[2][:, 0] & 1).any()
    assert not np.array_equal(a[0], a[2])


def make_db(n=1000, nbytes=24, seed=6):
    rng = np.random.default_rng(seed)
    db = rng.integers(0, 256, (n, nbytes), dtype=np.uint8)
    return db, new_key(rng), new_key(rng), rng


def test_doram_init_and_reads():
    db, ka, kb, rng = make_db()
    masked = doram_init(db, ka, kb)
    assert masked.data.shape == db.shape and np.mean(masked.data == db) < 0.02
    again = doram_init(db, ka, kb)
    assert np.array_equal(masked.data, again.data)
    assert not np.array_equal(doram_init(db, ka, new_key(rng)).data, masked.data)
    for i in range(0, 1000, 7):
        ya, yb = doram_read(masked, dpf_gen(i, masked.depth, rng), ka, kb, rng)
        assert np.array_equal(ya ^ yb, db[i])


def test_zero_database_reads_zero():
    _, ka, kb, rng = make_db()
    masked = doram_init(np.zeros((50, 8), dtype=np.uint8), ka, kb)
    ya, yb = doram_read(masked, dpf_gen(17, masked.depth, rng), ka, kb, rng)
    assert not (ya ^ yb).any()


def test_other_prf():
    db, ka, kb, rng = make_db(n=100)
    masked = doram_init(db, ka, kb, prf=ShakePrf.tag)
    ya, yb = doram_read(masked, dpf_gen(42, masked.depth, rng), ka, kb, rng)
    assert np.array_equal(ya ^ yb, db[42])


def test_masked_db_serialization():
    db, ka, kb, _ = make_db(n=33)
    masked = doram_init(db, ka, kb)
    back = MaskedDb.from_bytes(masked.to_bytes())
    assert back.prf == masked.prf and np.array_equal(back.data, masked.data)
    with pytest.raises(ValueError):
        MaskedDb.from_bytes(masked.to_bytes()[:-1])
    with pytest.raises(ValueError):
        MaskedDb(np.zeros((0, 4)))


def test_select_xor():
    m = np.arange(12, dtype=np.uint8).reshape(4, 3)
    out = select_xor(m, np.array([[1, 0, 1, 0], [0, 0, 0, 0]]))
    assert out[0].tolist() == (m[0] ^ m[2]).tolist() and not out[1].any()


def test_multi_read_rounds_and_values():
    db, ka, kb, rng = make_db(n=1 << 10)
    masked = doram_init(db, ka, kb)
    want = np.array([3, 3, 1023, 0, 512])
    idx_a = rng.integers(0, 1024, want.size)
    res = multi_read(masked, idx_a, (want - idx_a) % 1024, ka, kb, seed=1)
    assert np.array_equal(res.shares_a ^ res.shares_b, db[want])
    assert res.rounds == 10
    single = multi_read(masked, [5], [0], ka, kb, seed=2)
    assert np.array_equal(single.shares_a[0] ^ single.shares_b[0], db[5])
    assert single.rounds == res.rounds  # batching adds no rounds


def test_multi_read_tiny_domain():
    db, ka, kb, _ = make_db(n=1)
    res = multi_read(doram_init(db, ka, kb), [0], [0], ka, kb)
    assert np.array_equal(res.shares_a[0] ^ res.shares_b[0], db[0])
    with pytest.raises(ValueError):
        multi_read(doram_init(db, ka, kb), [0, 1], [0], ka, kb)


def test_prf_cost():
    assert prf_cost("AES-128", 128) == 5000
    assert prf_cost("kreyvium", 49152) == 150912
    assert prf_cost("aes", 64) == 2500
    lo, mid, hi = prf_cost("chacha20", 128), prf_cost("chacha20", 10_000), prf_cost("chacha20", 22118)
    assert lo < mid < hi
    assert prf_cost("kreyvium", 100_000) > 150912
    with pytest.raises(ValueError):
        prf_cost("des", 128)
    rows = prf_table_rows()
    assert len(rows) == 9
    assert {r["prf"] for r in rows} == {"aes-128", "chacha20", "kreyvium"}


def test_block_layout_round_trip():
    rng = np.random.default_rng(7)
    lay = BlockLayout.for_params(m=4, d=5, b_c=8, b_pid=20, b_d=23)
    assert (lay.coord_bytes, lay.id_bytes, lay.norm_bytes) == (1, 3, 3)
    assert lay.slot_bytes == 5 + 3 + 3 + 1 and lay.block_bytes == 4 * 12
    coords = rng.integers(0, 256, (6, 4, 5))
    ids = rng.integers(0, 1 << 20, (6, 4))
    norms = rng.integers(0, 1 << 23, (6, 4))
    valid = rng.integers(0, 2, (6, 4))
    blocks = lay.encode(coords, ids, norms, valid)
    assert blocks.shape == (6, 48)
    for got, want in zip(lay.decode(blocks), (coords, ids, norms, valid)):
        assert np.array_equal(got, want)


def test_block_layout_decodes_shares():
    rng = np.random.default_rng(8)
    lay = BlockLayout.for_params(m=3, d=2, b_c=8, b_pid=16, b_d=23)
    blk = lay.encode(rng.integers(0, 256, (3, 2)), rng.integers(0, 1 << 16, 3), rng.integers(0, 1 << 23, 3), [1, 0, 1])
    mask = rng.integers(0, 256, blk.shape, dtype=np.uint8)
    a, b = lay.decode(blk ^ mask), lay.decode(mask)
    for x, y, z in zip(a, b, lay.decode(blk)):
        assert np.array_equal(x ^ y, z)
    with pytest.raises(ValueError):
        lay.decode(blk[:-1])
