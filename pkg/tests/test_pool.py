"""Pool bookkeeping: chunk ingestion, error refresh, dropping, persistence."""

import math

import numpy as np
import pytest

from iem.errors import DataError
from iem.pgm import ImageCache, write_mask_pgm, write_pgm
from iem.pool import (
    ExampleRecord,
    PoolState,
    add_chunk,
    load_state,
    partition_by_label,
    record_training_update,
    refresh_errors,
    save_state,
)
from iem.selection import SelectionConfig


def _rec(rid, label="positive", **kw):
    return ExampleRecord(id=rid, image_ref=f"{rid}.pgm",
                         mask_ref=f"{rid}-mask.pgm", label=label, **kw)


def _pool(*records, **kw):
    return PoolState(records=list(records), **kw)


# -- record / pool construction -------------------------------------------


def test_record_rejects_bad_label():
    with pytest.raises(ValueError, match="bad label"):
        _rec("a", label="maybe")


def test_pool_rejects_duplicate_ids():
    with pytest.raises(ValueError, match="duplicate"):
        _pool(_rec("a"), _rec("a"))


def test_record_lookup():
    pool = _pool(_rec("a"), _rec("b", label="negative"))
    assert pool.record_for("b").label == "negative"
    with pytest.raises(ValueError, match="unknown example id"):
        pool.record_for("zz")


# -- add_chunk -------------------------------------------------------------


def test_add_chunk_sequences_stages():
    pool = _pool()
    add_chunk(pool, [_rec("a"), _rec("b", label="negative")], 0)
    assert pool.stage == 0 and len(pool) == 2
    add_chunk(pool, [_rec("c")], 1)
    assert pool.stage == 1 and len(pool) == 3
    assert pool.record_for("c").chunk_index == 1


def test_add_chunk_resets_bookkeeping_fields():
    pool = _pool()
    dirty = _rec("a", E=9.0, C=5, dropped=False)
    add_chunk(pool, [dirty], 0)
    got = pool.record_for("a")
    assert got.E == 0.0 and got.C == 0 and not got.dropped


def test_add_chunk_rejects_out_of_sequence():
    pool = _pool()
    with pytest.raises(ValueError, match="out of sequence"):
        add_chunk(pool, [_rec("a")], 1)
    add_chunk(pool, [_rec("a")], 0)
    with pytest.raises(ValueError, match="out of sequence"):
        add_chunk(pool, [_rec("b")], 3)


def test_add_chunk_rejects_duplicate_ids():
    pool = _pool()
    add_chunk(pool, [_rec("a")], 0)
    with pytest.raises(ValueError, match="'a'"):
        add_chunk(pool, [_rec("a")], 1)
    with pytest.raises(ValueError, match="within chunk"):
        add_chunk(pool, [_rec("b"), _rec("b")], 1)


# -- refresh_errors --------------------------------------------------------


def _write_pair(tmp_path, rid, img, mask):
    image_ref = str(tmp_path / f"{rid}.pgm")
    mask_ref = str(tmp_path / f"{rid}-mask.pgm")
    write_pgm(image_ref, img)
    write_mask_pgm(mask_ref, mask)
    return ExampleRecord(
        id=rid, image_ref=image_ref, mask_ref=mask_ref,
        label="positive" if mask.any() else "negative",
    )


def test_refresh_errors_perfect_prediction(tmp_path):
    mask = np.zeros((4, 4), dtype=bool)
    mask[1, 1] = True
    rec = _write_pair(tmp_path, "a", mask.astype(float), mask)
    pool = _pool(rec)
    refresh_errors(pool, lambda img: img, SelectionConfig(K=1), ImageCache())
    assert pool.record_for("a").E <= 1e-6


def test_refresh_errors_hand_computed(tmp_path):
    # image doubles as the probability map via an identity predictor
    img = np.array([[0.9, 0.2], [0.2, 0.2]])
    mask = np.array([[True, False], [False, False]])
    rec = _write_pair(tmp_path, "a", img, mask)
    pool = _pool(rec)
    refresh_errors(pool, lambda i: i, SelectionConfig(K=1), ImageCache())
    # prediction mask equals gt: fp = fn = 0, ji = 1, so E is just the loss
    p = np.rint(img * 255.0) / 255.0  # 8-bit storage quantization
    want = -(math.log(p[0, 0]) + 3 * math.log(1 - p[0, 1])) / 4
    assert pool.record_for("a").E == pytest.approx(want, abs=1e-12)


def test_refresh_errors_skips_dropped(tmp_path):
    mask = np.zeros((4, 4), dtype=bool)
    mask[1, 1] = True
    rec = _write_pair(tmp_path, "a", np.zeros((4, 4)), mask)
    rec.dropped = True
    pool = _pool(rec)
    refresh_errors(pool, lambda img: np.full_like(img, 0.5),
                   SelectionConfig(K=1), ImageCache())
    assert pool.record_for("a").E == 0.0


# -- record_training_update ------------------------------------------------


def test_update_takes_mean_and_counts():
    pool = _pool(_rec("a"))
    record_training_update(pool, "a", [1.0, 2.0, 3.0], d=10)
    got = pool.record_for("a")
    assert got.E == pytest.approx(2.0) and got.C == 1 and not got.dropped
    record_training_update(pool, "a", [0.7], d=10)
    assert pool.record_for("a").E == pytest.approx(0.7)
    assert pool.record_for("a").C == 2


def test_update_drops_when_count_exceeds_d():
    pool = _pool(_rec("a", E=5.0, C=10))
    record_training_update(pool, "a", [4.0], d=10)
    got = pool.record_for("a")
    assert got.dropped and got.E == 0.0 and got.C == 11
    with pytest.raises(ValueError, match="dropped"):
        record_training_update(pool, "a", [1.0], d=10)


def test_update_rejects_unknown_or_empty():
    pool = _pool(_rec("a"))
    with pytest.raises(ValueError, match="unknown"):
        record_training_update(pool, "zz", [1.0], d=10)
    with pytest.raises(ValueError, match="nonempty"):
        record_training_update(pool, "a", [], d=10)


# -- partition_by_label ----------------------------------------------------


def test_partition_excludes_dropped_and_keeps_order():
    records = [
        _rec("p1"), _rec("n1", label="negative"), _rec("p2"),
        _rec("n2", label="negative", dropped=True), _rec("n3", label="negative"),
    ]
    pos, neg = partition_by_label(_pool(*records))
    assert [r.id for r in pos] == ["p1", "p2"]
    assert [r.id for r in neg] == ["n1", "n3"]


def test_partition_all_dropped():
    pos, neg = partition_by_label(_pool(_rec("a", dropped=True)))
    assert pos == [] and neg == []


# -- persistence -----------------------------------------------------------


def test_save_load_round_trip(tmp_path):
    records = [
        _rec("a", E=1 / 3, C=2),
        _rec("b", label="negative", E=1e-17, C=0),
        _rec("c", E=0.0, C=11, dropped=True),
    ]
    pool = _pool(*records, stage=2, config_hash="abc123")
    path = tmp_path / "pool.tsv"
    save_state(pool, path)
    got = load_state(path)
    assert got.stage == 2 and got.config_hash == "abc123"
    assert len(got) == 3
    for want in records:
        back = got.record_for(want.id)
        for name in ("image_ref", "mask_ref", "label", "chunk_index",
                     "E", "C", "dropped"):
            assert getattr(back, name) == getattr(want, name)


def test_save_load_is_byte_stable(tmp_path):
    pool = _pool(_rec("a", E=0.1 + 0.2), stage=1, config_hash="ff")
    first, second = tmp_path / "1.tsv", tmp_path / "2.tsv"
    save_state(pool, first)
    save_state(load_state(first), second)
    assert first.read_bytes() == second.read_bytes()


@pytest.mark.parametrize(
    "mangle, complaint",
    [
        (lambda lines: [], "empty"),
        (lambda lines: ["bogus-header"] + lines[1:], "bad header"),
        (lambda lines: lines[:-1], "truncated"),
        (lambda lines: lines + [lines[-1]], "duplicate id"),
        (lambda lines: [lines[0], lines[1].replace("label=positive",
                                                   "label=odd")], "bad label"),
        (lambda lines: [lines[0], lines[1].replace("E=", "Z=")], "expected field"),
        (lambda lines: [lines[0], lines[1].replace("C=0", "C=x")], "bad field value"),
        (lambda lines: [lines[0], lines[1] + "\textra=1"], "expected 8 fields"),
    ],
)
def test_load_rejects_malformed(tmp_path, mangle, complaint):
    pool = _pool(_rec("a", E=0.5))
    path = tmp_path / "pool.tsv"
    save_state(pool, path)
    lines = path.read_text().splitlines()
    mangled = mangle(lines)
    path.write_text("\n".join(mangled) + ("\n" if mangled else ""))
    with pytest.raises(DataError, match=complaint):
        load_state(path)


def test_load_rejects_dropped_with_nonzero_e(tmp_path):
    pool = _pool(_rec("a", E=0.5))
    path = tmp_path / "pool.tsv"
    save_state(pool, path)
    text = path.read_text().replace("dropped=0", "dropped=1")
    path.write_text(text)
    with pytest.raises(DataError, match="dropped record with E != 0"):
        load_state(path)


def test_load_missing_file(tmp_path):
    with pytest.raises(DataError, match="cannot read"):
        load_state(tmp_path / "nope.tsv")
