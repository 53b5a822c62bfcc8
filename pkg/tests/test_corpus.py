import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchjudge.corpus import (
    DatasetError,
    FoldAssignment,
    PatchSample,
    Verdict,
    dataset_stats,
    deduplicate,
    kfold_split,
    load_dataset,
    normalize_code,
    parse_label,
    save_dataset,
)


def sample(i, buggy="a", fixed="b", label=Verdict.CORRECT):
    return PatchSample(id=f"id{i}", buggy_code=buggy, fixed_code=fixed, label=label)


def write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs))


def test_load_six_in_file_order(fixtures_dir):
    samples = load_dataset(fixtures_dir / "six.jsonl")
    assert [s.id for s in samples] == [f"s{i}" for i in range(6)]
    assert samples[1].label is Verdict.CORRECT and samples[0].label is Verdict.OVERFITTING


def test_small_fixture_stats(fixtures_dir):
    assert tuple(dataset_stats(load_dataset(fixtures_dir / "small_118.jsonl"))) == (53, 65, 118)


def test_missing_fixed_names_line(tmp_path):
    p = tmp_path / "d.jsonl"
    good = {"id": "a", "buggy": "x", "fixed": "y", "label": "correct"}
    write_lines(p, [good, {"id": "b", "buggy": "x", "label": "correct"}])
    with pytest.raises(DatasetError, match=r"line 2.*fixed"):
        load_dataset(p)


def test_duplicate_id_rejected(tmp_path):
    p = tmp_path / "d.jsonl"
    rec = {"id": "a", "buggy": "x", "fixed": "y", "label": "correct"}
    write_lines(p, [rec, rec])
    with pytest.raises(DatasetError, match="duplicate"):
        load_dataset(p)


@pytest.mark.parametrize("bad", ["Correct", "CORRECT", "overfit", "", "incorrect", 1, None])
def test_labels_are_literal_lowercase(bad):
    with pytest.raises(DatasetError):
        parse_label(bad)


def test_empty_code_rejected():
    with pytest.raises(DatasetError):
        PatchSample("a", "", "y", Verdict.CORRECT)


def test_save_load_roundtrip(tmp_path):
    samples = [sample(i, buggy=f"b{i}\n", fixed="é", label=Verdict.OVERFITTING) for i in range(3)]
    save_dataset(samples, tmp_path / "x.jsonl")
    assert load_dataset(tmp_path / "x.jsonl") == samples


def test_dedup_identical_pair_keeps_first():
    out = deduplicate([sample(1), sample(2)])
    assert [s.id for s in out] == ["id1"]


def test_dedup_trailing_whitespace_and_crlf():
    a = sample(1, buggy="x\ny", fixed="z")
    b = sample(2, buggy="x  \r\ny", fixed="z\t")
    assert normalize_code(b.buggy_code) == normalize_code(a.buggy_code)
    assert [s.id for s in deduplicate([a, b])] == ["id1"]


def test_dedup_empty():
    assert deduplicate([]) == []


@given(st.lists(st.tuples(st.sampled_from(["a", "a ", "b", "c\r\n"]), st.sampled_from(["x", "y", "y  "])), max_size=30))
def test_dedup_idempotent_and_order_preserving(pairs):
    samples = [sample(i, b, f) for i, (b, f) in enumerate(pairs)]
    once = deduplicate(samples)
    assert deduplicate(once) == once
    idx = [samples.index(s) for s in once]
    assert idx == sorted(idx)
    keys = {(normalize_code(s.buggy_code), normalize_code(s.fixed_code)) for s in once}
    assert len(keys) == len(once)


def test_kfold_ten_ids():
    fa = kfold_split([f"x{i}" for i in range(10)], 5, 0)
    assert fa.sizes() == [2] * 5
    assert set(fa.folds) == {f"x{i}" for i in range(10)}


def test_kfold_1183_sizes():
    fa = kfold_split([str(i) for i in range(1183)], 5, 0)
    assert sorted(fa.sizes()) == [236, 236, 237, 237, 237]


def test_kfold_deterministic_bytes():
    ids = [f"x{i}" for i in range(57)]
    assert kfold_split(ids, 5, 9).to_json() == kfold_split(ids, 5, 9).to_json()
    assert kfold_split(ids, 5, 9).folds != kfold_split(ids, 5, 10).folds


@pytest.mark.parametrize("k,n", [(1, 10), (0, 10), (5, 4)])
def test_kfold_errors(k, n):
    with pytest.raises(DatasetError):
        kfold_split([str(i) for i in range(n)], k, 0)


def test_kfold_rejects_repeated_ids():
    with pytest.raises(DatasetError):
        kfold_split(["a", "a", "b"], 2, 0)


@settings(max_examples=60)
@given(n=st.integers(2, 200), k=st.integers(2, 10), seed=st.integers(0, 2**32 - 1), data=st.data())
def test_kfold_partition_property(n, k, seed, data):
    if n < k:
        return
    ids = [f"id{i}" for i in range(n)]
    perm = data.draw(st.permutations(ids))
    for order in (ids, perm):
        fa = kfold_split(order, k, seed)
        assert sorted(fa.folds) == sorted(ids)
        assert all(0 <= f < k for f in fa.folds.values())
        assert max(fa.sizes()) - min(fa.sizes()) <= 1


def test_stratified_balances_classes():
    ids = [str(i) for i in range(100)]
    labels = [Verdict.OVERFITTING if i < 30 else Verdict.CORRECT for i in range(100)]
    fa = kfold_split(ids, 5, 3, labels=labels)
    per_fold = [sum(labels[int(i)] is Verdict.OVERFITTING for i in fa.fold_ids(f)) for f in range(5)]
    assert per_fold == [6] * 5
    assert max(fa.sizes()) - min(fa.sizes()) <= 1


def test_fold_file_roundtrip(tmp_path):
    fa = kfold_split([f"x{i}" for i in range(11)], 3, 1)
    fa.save(tmp_path / "f.json")
    back = FoldAssignment.load(tmp_path / "f.json")
    assert back == fa
    assert json.loads((tmp_path / "f.json").read_text()).keys() == {"k", "seed", "folds"}


def test_fold_file_out_of_range(tmp_path):
    (tmp_path / "f.json").write_text(json.dumps({"k": 2, "seed": 0, "folds": {"a": 2}}))
    with pytest.raises(DatasetError):
        FoldAssignment.load(tmp_path / "f.json")


def synthetic_manifest(correct, overfitting):
    return [sample(i, label=Verdict.CORRECT) for i in range(correct)] + [
        sample(correct + i, label=Verdict.OVERFITTING) for i in range(overfitting)
    ]


@pytest.mark.parametrize("c,o,t", [(0, 0, 0), (535, 648, 1183), (25589, 24105, 49694)])
def test_stats_counts(c, o, t):
    assert tuple(dataset_stats(synthetic_manifest(c, o))) == (c, o, t)
