import pytest

from c2fdet.geometry import iou
from c2fdet.jsonl import dumps_canonical
from c2fdet.simulator import (
    CLASS_A,
    CLASS_B,
    CLASS_C,
    CLASS_PLAIN,
    CorpusSpec,
    CorpusSpecError,
    GeometryRanges,
    Scene,
    generate_corpus,
    generate_scene,
    read_scene_manifest,
    write_scene_manifest,
)


def test_counts_per_class():
    spec = CorpusSpec(count_b=450, count_a=200, count_c=200, seed=1)
    scenes = generate_corpus(spec)
    assert len(scenes) == 850
    by_class = {}
    for s in scenes:
        by_class[s.scene_class] = by_class.get(s.scene_class, 0) + 1
    assert by_class == {CLASS_B: 450, CLASS_A: 200, CLASS_C: 200}
    assert sum(1 for s in scenes if s.label) == 450


def test_label_consistency():
    spec = CorpusSpec(count_b=30, count_a=30, count_c=30, count_plain=10, seed=3)
    for s in generate_corpus(spec):
        assert s.label == (s.scene_class == CLASS_B)


def test_class_b_nesting():
    spec = CorpusSpec(count_b=200, count_a=0, count_c=0, seed=5)
    for s in generate_corpus(spec):
        assert s.gt_coarse_region.contains_box(s.gt_fine_region)
        assert iou(s.gt_fine_region, s.gt_coarse_region) > 0.0


def test_regions_inside_image():
    spec = CorpusSpec(count_b=100, count_a=100, count_c=100, seed=6)
    for s in generate_corpus(spec):
        for region in (s.gt_coarse_region, s.gt_fine_region):
            if region is not None:
                assert s.image_bounds.contains_box(region)


def test_determinism_same_seed():
    spec = CorpusSpec(count_b=40, count_a=10, count_c=10, seed=7)
    a = [dumps_canonical(s.to_json_dict()) for s in generate_corpus(spec)]
    b = [dumps_canonical(s.to_json_dict()) for s in generate_corpus(spec)]
    assert a == b


def test_different_seeds_differ():
    s1 = generate_corpus(CorpusSpec(count_b=5, count_a=0, count_c=0, seed=1))
    s2 = generate_corpus(CorpusSpec(count_b=5, count_a=0, count_c=0, seed=2))
    assert [s.to_json_dict() for s in s1] != [s.to_json_dict() for s in s2]


def test_shardable_by_scene_id():
    spec = CorpusSpec(count_b=20, count_a=20, count_c=20, seed=9)
    full = generate_corpus(spec)
    sharded = [generate_scene(spec, sid) for sid in range(30, 60)]
    assert [s.to_json_dict() for s in full[30:60]] == [s.to_json_dict() for s in sharded]


def test_zero_total_rejected():
    with pytest.raises(CorpusSpecError):
        CorpusSpec(count_b=0, count_a=0, count_c=0, count_plain=0)


def test_negative_count_rejected():
    with pytest.raises(CorpusSpecError):
        CorpusSpec(count_b=-1, count_a=5, count_c=5)


def test_unsatisfiable_geometry_rejected():
    # regions wider than the image cannot be placed
    with pytest.raises(CorpusSpecError):
        CorpusSpec(
            count_b=1,
            count_a=0,
            count_c=0,
            image_width=100.0,
            image_height=1000.0,
            ranges=GeometryRanges(coarse_height_frac=(0.3, 0.9), aspect=(1.0, 1.5)),
        )


def test_plain_negative_scenes_have_no_regions():
    spec = CorpusSpec(count_b=1, count_a=0, count_c=0, count_plain=5, seed=2)
    for s in generate_corpus(spec)[1:]:
        assert s.scene_class == CLASS_PLAIN
        assert s.gt_coarse_region is None and s.gt_fine_region is None


def test_manifest_roundtrip(tmp_path):
    spec = CorpusSpec(count_b=12, count_a=4, count_c=4, count_plain=2, seed=11)
    scenes = generate_corpus(spec)
    path = tmp_path / "scenes.jsonl"
    assert write_scene_manifest(path, scenes) == 22
    loaded = read_scene_manifest(path)
    assert loaded == scenes


def test_manifest_rejects_bad_version(tmp_path):
    path = tmp_path / "scenes.jsonl"
    path.write_text('{"v":99,"scene_id":0,"class":"b"}\n')
    with pytest.raises(ValueError):
        read_scene_manifest(path)


def test_scene_invariants_enforced():
    from c2fdet.geometry import Box

    bounds = Box(0, 0, 100, 100)
    with pytest.raises(ValueError):
        Scene(0, CLASS_B, bounds, Box(0, 0, 10, 10), None)
    with pytest.raises(ValueError):
        Scene(0, CLASS_A, bounds, Box(0, 0, 10, 10), Box(2, 2, 5, 5))
    with pytest.raises(ValueError):
        Scene(0, CLASS_C, bounds, Box(0, 0, 10, 10), Box(2, 2, 5, 5))
    with pytest.raises(ValueError):
        Scene(0, CLASS_B, bounds, Box(0, 0, 10, 10), Box(5, 5, 20, 20))  # not nested
