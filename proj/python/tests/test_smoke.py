import math

import pytest

import nmneval


def test_parse_and_linearize_round_trip():
    text = "equal(count(find[dogs]), count(filter[black](find[dogs])))"
    program = nmneval.parse(text)
    assert len(program) == 6
    assert program.linearize() == text
    assert program.module(0) == "equal"
    assert program.utterance(2) == "dogs"
    assert nmneval.parse("find[ dogs ]").linearize() == "find[dogs]"


def test_typecheck_errors_surface_as_value_errors():
    with pytest.raises(ValueError):
        nmneval.parse_typed("filter[black](count(find[dogs]))")
    with pytest.raises(ValueError):
        nmneval.parse("exist(find[llamas)")
    program = nmneval.parse_typed("exist(find[dog])")
    assert program.typechecked
    assert program.node_type(0) == "boolean"


def test_probability_algebra():
    probs = nmneval.discretize(0.0, 1.0, 72)
    assert abs(sum(probs) - 1.0) < 1e-12
    assert probs[0] == pytest.approx(0.6914624612740131, abs=1e-12)

    assert nmneval.compare("equal", (3, 0), (3, 0)) == 1.0
    assert nmneval.compare("less", (2, 0), (5, 0)) == 1.0
    assert nmneval.bool_and(0.9, 0.5) == pytest.approx(0.45)
    assert nmneval.bool_or(0.5, 0.5) == pytest.approx(0.75)

    mean, var = nmneval.gaussian_division((4, 0.1), (2, 0.1))
    assert mean == pytest.approx(2.05, abs=1e-12)
    assert var == pytest.approx(0.125, abs=1e-12)

    support, probs = nmneval.value_dist_add([1, 2], [0.5, 0.5], [1, 2], [0.5, 0.5])
    assert support == [2, 3, 4]
    assert probs == pytest.approx([0.25, 0.5, 0.25])


def test_iou():
    a = nmneval.BoundingBox(0, 0, 2, 2)
    b = nmneval.BoundingBox(1, 1, 3, 3)
    assert nmneval.iou(a, b) == pytest.approx(1 / 7)
    right = nmneval.BoundingBox(0, 0, 2, 2, image="right")
    assert nmneval.iou(a, right) == 0.0


def test_synthetic_pipeline_end_to_end():
    spec = nmneval.SceneSpec()
    spec.jitter_iou_min = 1.0
    spec.jitter_iou_max = 1.0
    spec.distractor_proposals = 0
    config = nmneval.ExecConfig(sigma_sq=0.0)

    agreements = 0
    for seed in range(20):
        program = nmneval.generate_program(spec, seed)
        example = nmneval.generate_example(f"ex{seed}", program, spec, 1000 + seed, config)
        assert (example.denotation > 0.5) == example.expected
        agreements += 1
    assert agreements == 20


def test_faithfulness_matches_upper_bound_without_noise():
    spec = nmneval.SceneSpec()
    spec.jitter_iou_min = 0.95
    spec.distractor_proposals = 3
    program = nmneval.parse_typed("exist(filter[black](find[dog]))")
    example = nmneval.generate_example("f", program, spec, 7, nmneval.ExecConfig())
    measured = nmneval.measure_faithfulness(example)
    best = nmneval.upper_bound_faithfulness(example)
    assert measured["overall"]["f1"] == pytest.approx(best["overall"]["f1"], abs=1e-9)
    assert best["overall"]["precision"] == 1.0


def test_custom_grounding_provider():
    class ConstantProvider(nmneval.GroundingProvider):
        def scores(self, query):
            assert query.kind == "find"
            assert query.utterance == "dog"
            return [1.0, 0.0]

    scene = nmneval.Scene(
        "e",
        [nmneval.BoundingBox(0, 0, 10, 10), nmneval.BoundingBox(20, 20, 30, 30)],
    )
    program = nmneval.parse_typed("exist(find[dog])")
    trace = nmneval.execute(program, scene, ConstantProvider(), nmneval.ExecConfig(sigma_sq=0.0))
    assert trace.denotation == 1.0
    entries = {e["node"]: e["value"] for e in trace.entries}
    assert entries[1] == [1.0, 0.0]


def test_text_and_permutation():
    assert nmneval.text_instance_score([0.5, 0.5], [(0, 0)]) == pytest.approx(math.log(2))
    result = nmneval.permutation_test([0.1, 0.2], [0.1, 0.2], trials=500, seed=3)
    assert result["p_value"] == 1.0

    a = [0.5 + 0.3 * (i % 2) for i in range(40)]
    b = [0.2 + 0.3 * (i % 2) for i in range(40)]
    strong = nmneval.permutation_test(a, b, trials=2000, seed=5)
    assert strong["p_value"] < 0.01
