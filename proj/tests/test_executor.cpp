#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "nmneval/executor.hpp"
#include "nmneval/rng.hpp"
#include "nmneval/synth.hpp"
#include "test_helpers.hpp"

using namespace nmneval;
using nmneval::testing::StubProvider;
using nmneval::testing::WorldBuilder;
using nmneval::testing::box;
using nmneval::testing::make_scene;

TEST_CASE("compose_learned follows the module algebra") {
    BoxAttention p({1.0, 0.5});

    BoxAttention found = compose_learned(LearnedKind::Find, {}, {0.3, 0.9});
    CHECK(found.probs == std::vector<double>{0.3, 0.9});

    BoxAttention filtered = compose_learned(LearnedKind::Filter, {p}, {0.8, 0.8});
    CHECK(filtered.probs[0] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(filtered.probs[1] == doctest::Approx(0.4).epsilon(1e-15));

    // max(p2) = 0 zeroes the whole output.
    BoxAttention zero2({0.0, 0.0});
    BoxAttention rel = compose_learned(LearnedKind::WithRelation, {p, zero2}, {1.0, 1.0});
    CHECK(rel.probs == std::vector<double>{0.0, 0.0});

    BoxAttention nonzero2({0.5, 0.25});
    rel = compose_learned(LearnedKind::WithRelation, {p, nonzero2}, {1.0, 0.5});
    CHECK(rel.probs[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(rel.probs[1] == doctest::Approx(0.125).epsilon(1e-15));

    // project: max(p) * find(q) ⊙ score
    BoxAttention find_q({0.9, 0.1});
    BoxAttention projected = compose_learned(LearnedKind::Project, {p, find_q}, {0.5, 1.0});
    CHECK(projected.probs[0] == doctest::Approx(0.45).epsilon(1e-15));
    CHECK(projected.probs[1] == doctest::Approx(0.1).epsilon(1e-15));

    CHECK_THROWS_AS(compose_learned(LearnedKind::Filter, {}, {0.5}), ValidationError);
    CHECK_THROWS_AS(compose_learned(LearnedKind::Filter, {BoxAttention({0.1, 0.2, 0.3})},
                                    {0.5, 0.5}),
                    ValidationError);
}

TEST_CASE("intersect and discard") {
    BoxAttention p({0.5, 0.8});
    BoxAttention ones({1.0, 1.0});
    BoxAttention zeros({0.0, 0.0});

    CHECK(intersect(p, ones).probs == p.probs);
    CHECK(intersect(p, zeros).probs == zeros.probs);
    CHECK(intersect(p, BoxAttention({0.5, 0.5})).probs == std::vector<double>{0.25, 0.4});
    CHECK(intersect(p, BoxAttention({0.5, 0.5})).probs ==
          intersect(BoxAttention({0.5, 0.5}), p).probs);
    // Idempotent exactly on 0/1 attentions.
    BoxAttention binary({1.0, 0.0});
    CHECK(intersect(binary, binary).probs == binary.probs);
    CHECK(intersect(p, p).probs != p.probs);
    CHECK(discard(p, p).probs == std::vector<double>{0.0, 0.0});
    CHECK(discard(BoxAttention({0.3, 0.9}), BoxAttention({0.5, 0.2})).probs ==
          std::vector<double>{0.0, 0.7});
    CHECK_THROWS_AS(intersect(p, BoxAttention({0.1})), ValidationError);
}

TEST_CASE("restrict_to_image") {
    Scene scene = make_scene({box(0, 0, 10, 10, ImageSide::Left),
                              box(0, 0, 10, 10, ImageSide::Right),
                              box(20, 20, 30, 30, ImageSide::Left)});
    BoxAttention left_only({0.7, 0.0, 0.4});
    CHECK(restrict_to_image(left_only, ImageSide::Left, scene).probs == left_only.probs);

    BoxAttention mixed({0.7, 0.9, 0.4});
    CHECK(restrict_to_image(mixed, ImageSide::Right, scene).probs ==
          std::vector<double>{0.0, 0.9, 0.0});
    BoxAttention both_zeroed =
        restrict_to_image(restrict_to_image(mixed, ImageSide::Left, scene), ImageSide::Right,
                          scene);
    CHECK(both_zeroed.probs == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("count_sum closed forms") {
    CHECK(count_sum(BoxAttention({0.9, 0.8, 0.9}), 0.25).mean == 2.6);
    CHECK(count_sum(BoxAttention({0.9, 0.8, 0.9}), 0.25).var == 0.25);
    CHECK(count_sum(BoxAttention(std::vector<double>(20, 0.05)), 0.25).mean == 1.0);
    CHECK(count_sum(BoxAttention({0.0, 0.0}), 0.25).mean == 0.0);
}

TEST_CASE("count_sum is additive over concatenated scenes") {
    Rng rng(88);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> p1, p2;
        for (int j = 0; j < 6; ++j) p1.push_back(rng.uniform());
        for (int j = 0; j < 4; ++j) p2.push_back(rng.uniform());
        std::vector<double> joined = p1;
        joined.insert(joined.end(), p2.begin(), p2.end());
        double split = count_sum(BoxAttention(p1), 0).mean + count_sum(BoxAttention(p2), 0).mean;
        CHECK(count_sum(BoxAttention(joined), 0).mean ==
              doctest::Approx(split).epsilon(1e-12));
    }
}

TEST_CASE("count_overlap_aware clusters by IOU") {
    BoundingBox a = box(0, 0, 10, 10);
    BoundingBox nearly_a = box(0, 0, 10, 9.0);  // IOU 90/100 = 0.9
    Scene scene = make_scene({a, nearly_a});
    NumberValue n = count_overlap_aware(BoxAttention({0.9, 0.8}), scene, 0.5, 0.25);
    CHECK(n.mean == 0.9);
    CHECK(n.var == 0.25);

    // Pairwise-disjoint boxes reduce to the plain sum.
    Scene disjoint = make_scene({box(0, 0, 10, 10), box(20, 0, 30, 10), box(40, 0, 50, 10)});
    BoxAttention p({0.9, 0.8, 0.9});
    CHECK(count_overlap_aware(p, disjoint, 0.5, 0.25).mean == count_sum(p, 0.25).mean);

    // One box duplicated three times counts once.
    Scene dup = make_scene({a, a, a});
    CHECK(count_overlap_aware(BoxAttention({1.0, 1.0, 1.0}), dup, 0.5, 0.25).mean == 1.0);

    // 20 copies at 0.05: the sum pathology collapses to a single 0.05.
    Scene dup20 = make_scene(std::vector<BoundingBox>(20, a));
    CHECK(count_overlap_aware(BoxAttention(std::vector<double>(20, 0.05)), dup20, 0.5, 0.25)
              .mean == 0.05);
}

TEST_CASE("exist composes count with greater-equal") {
    Scene scene = make_scene({box(0, 0, 10, 10), box(20, 0, 30, 10), box(40, 0, 50, 10)});
    StubProvider provider;
    ExecConfig config;
    config.sigma_sq = 0.25;

    double all = exist(BoxAttention({1.0, 1.0, 1.0}), scene, provider, config, 0).value;
    CHECK(all == doctest::Approx(1.0).epsilon(1e-5));

    // All-zero attention: Pr[N(0, 0.25) >= 1] = 1 - CDF(0.5) = 1 - Phi(1).
    double none = exist(BoxAttention({0.0, 0.0, 0.0}), scene, provider, config, 0).value;
    CHECK(none == doctest::Approx(0.15865525393145707).epsilon(1e-9));

    config.sigma_sq = 0.0;
    CHECK(exist(BoxAttention({0.0, 0.0, 0.0}), scene, provider, config, 0).value == 0.0);
}

TEST_CASE("execute the all-dogs-are-black program against a synthetic world") {
    SignatureTable table = SignatureTable::visual();
    Program program =
        parse_typed("equal(count(find[dogs]), count(filter[black](find[dogs])))", table);
    ExecConfig config;
    config.sigma_sq = 0.0;  // point-like counts

    // Two dogs, one black: equal(2, 1) -> false.
    {
        WorldBuilder builder;
        builder.object("dogs", {"black"}, box(0, 0, 20, 20));
        builder.object("dogs", {}, box(40, 40, 60, 60));
        SyntheticScene synthetic = builder.perfect_proposals();
        OracleProvider provider(synthetic, 0.0, 1);
        ExecutionTrace trace = execute(program, synthetic.scene, provider, config);
        CHECK(std::get<TruthProb>(trace.denotation).value < 0.1);
        CHECK(trace.entries.size() == program.size());
        CHECK(std::get<TruthProb>(trace.at(program.root())).value ==
              std::get<TruthProb>(trace.denotation).value);
    }
    // Both dogs black: equal(2, 2) -> true.
    {
        WorldBuilder builder;
        builder.object("dogs", {"black"}, box(0, 0, 20, 20));
        builder.object("dogs", {"black"}, box(40, 40, 60, 60));
        SyntheticScene synthetic = builder.perfect_proposals();
        OracleProvider provider(synthetic, 0.0, 1);
        ExecutionTrace trace = execute(program, synthetic.scene, provider, config);
        CHECK(std::get<TruthProb>(trace.denotation).value > 0.9);
    }
}

TEST_CASE("trace holds one correctly-typed entry per node") {
    SignatureTable table = SignatureTable::visual();
    SceneSpec spec;
    for (int i = 0; i < 50; ++i) {
        Program program = generate_program(spec, 1000 + i, 13);
        if (std::any_of(program.nodes().begin(), program.nodes().end(),
                        [](const ProgramNode& n) { return is_macro_module(n.module); }))
            continue;  // macro subprograms legitimately trace twice

        SyntheticScene synthetic = generate_scene(spec, 2000 + i);
        synthetic.scene.id = "fuzz";
        OracleProvider provider(synthetic, 0.0, 3);
        ExecutionTrace trace = execute(program, synthetic.scene, provider, ExecConfig{});
        REQUIRE(trace.entries.size() == program.size());
        for (const auto& entry : trace.entries) {
            ValueType t = *program.node(entry.node).type;
            switch (t) {
                case ValueType::Boolean:
                    CHECK(std::holds_alternative<TruthProb>(entry.value));
                    break;
                case ValueType::Number:
                    CHECK(std::holds_alternative<NumberValue>(entry.value));
                    break;
                case ValueType::BoxAttention:
                    CHECK(std::holds_alternative<BoxAttention>(entry.value));
                    break;
                default: FAIL("unexpected node type");
            }
        }
    }
}

TEST_CASE("filter output never exceeds its input") {
    Scene scene = make_scene({box(0, 0, 10, 10), box(20, 0, 30, 10), box(40, 0, 50, 10)});
    Program program = parse_typed("exist(filter[black](find[dogs]))", SignatureTable::visual());
    Rng rng(11);
    for (int i = 0; i < 100; ++i) {
        StubProvider provider;
        std::vector<double> find_scores, filter_scores;
        for (int j = 0; j < 3; ++j) {
            find_scores.push_back(rng.uniform());
            filter_scores.push_back(rng.uniform());
        }
        provider.set(2, LearnedKind::Find, find_scores);
        provider.set(1, LearnedKind::Filter, filter_scores);
        ExecutionTrace trace = execute(program, scene, provider, ExecConfig{});
        const auto& in = std::get<BoxAttention>(trace.at(2));
        const auto& out = std::get<BoxAttention>(trace.at(1));
        for (std::size_t j = 0; j < 3; ++j) CHECK(out.probs[j] <= in.probs[j]);
    }
}

TEST_CASE("provider scores are validated") {
    Scene scene = make_scene({box(0, 0, 10, 10), box(20, 0, 30, 10)});
    Program program = parse_typed("exist(find[dogs])", SignatureTable::visual());

    StubProvider wrong_length;
    wrong_length.set(1, LearnedKind::Find, {0.5});
    CHECK_THROWS_AS(execute(program, scene, wrong_length, ExecConfig{}), ValidationError);

    StubProvider out_of_range;
    out_of_range.set(1, LearnedKind::Find, {0.5, 1.5});
    CHECK_THROWS_AS(execute(program, scene, out_of_range, ExecConfig{}), ValidationError);

    Program untyped = parse("exist(find[dogs])");
    StubProvider ok;
    ok.set(1, LearnedKind::Find, {0.5, 0.5});
    CHECK_THROWS_AS(execute(untyped, scene, ok, ExecConfig{}), ValidationError);
}

namespace {

/// Symmetric world: one dog at the same coordinates in each image.
SyntheticScene mirrored_world() {
    WorldBuilder builder;
    builder.object("dog", {}, box(10, 10, 30, 30, ImageSide::Left));
    builder.object("dog", {}, box(10, 10, 30, 30, ImageSide::Right));
    return builder.perfect_proposals();
}

}  // namespace

TEST_CASE("macros combine per-image executions") {
    SignatureTable table = SignatureTable::visual();
    ExecConfig config;  // sigma_sq 0.25 keeps the truth values strictly inside (0,1)
    SyntheticScene synthetic = mirrored_world();
    OracleProvider provider(synthetic, 0.0, 1);

    Program each = parse_typed("in-each-image(exist(find[dog]))", table);
    ExecutionTrace t_each = execute(each, synthetic.scene, provider, config);
    double x_left = std::get<TruthProb>(t_each.at(1, ImageRestriction::Left)).value;
    double x_right = std::get<TruthProb>(t_each.at(1, ImageRestriction::Right)).value;
    CHECK(x_left == x_right);  // mirrored scene
    CHECK(std::get<TruthProb>(t_each.denotation).value ==
          doctest::Approx(x_left * x_left).epsilon(1e-12));

    Program at_least = parse_typed("in-at-least-one-image(exist(find[dog]))", table);
    ExecutionTrace t_any = execute(at_least, synthetic.scene, provider, config);
    CHECK(std::get<TruthProb>(t_any.denotation).value ==
          doctest::Approx(2 * x_left - x_left * x_left).epsilon(1e-12));

    // Subprogram nodes trace once per image; macro node once.
    CHECK(t_each.entries.size() == 1 + 2 * 2);
}

TEST_CASE("in-one-other-image checks both pairings") {
    SignatureTable table = SignatureTable::visual();
    ExecConfig config;
    config.sigma_sq = 0.0;

    // Dog only in the left image, cat only in the right image.
    WorldBuilder builder;
    builder.object("dog", {}, box(10, 10, 30, 30, ImageSide::Left));
    builder.object("cat", {}, box(10, 10, 30, 30, ImageSide::Right));
    SyntheticScene synthetic = builder.perfect_proposals();
    OracleProvider provider(synthetic, 0.0, 1);

    Program p = parse_typed("in-one-other-image(exist(find[dog]), exist(find[cat]))", table);
    ExecutionTrace trace = execute(p, synthetic.scene, provider, config);
    CHECK(std::get<TruthProb>(trace.denotation).value == 1.0);

    // Both subprograms looking at the same image fail.
    Program q = parse_typed("in-one-other-image(exist(find[dog]), exist(find[dog]))", table);
    ExecutionTrace t2 = execute(q, synthetic.scene, provider, config);
    CHECK(std::get<TruthProb>(t2.denotation).value == 0.0);
}

TEST_CASE("nested macros reuse cached evaluations and stay consistent") {
    SignatureTable table = SignatureTable::visual();
    SyntheticScene synthetic = mirrored_world();
    OracleProvider provider(synthetic, 0.0, 1);
    ExecConfig config;
    config.sigma_sq = 0.0;

    Program nested =
        parse_typed("in-each-image(in-at-least-one-image(exist(find[dog])))", table);
    ExecutionTrace trace = execute(nested, synthetic.scene, provider, config);
    // Left pass sees {left, neither}; right pass {neither, right}; the
    // neither context is shared. in-each(in-at-least-one(x)) == in-each(x).
    Program plain = parse_typed("in-each-image(exist(find[dog]))", table);
    ExecutionTrace plain_trace = execute(plain, synthetic.scene, provider, config);
    CHECK(std::get<TruthProb>(trace.denotation).value ==
          std::get<TruthProb>(plain_trace.denotation).value);
}

TEST_CASE("execution is deterministic") {
    SceneSpec spec;
    Program program = generate_program(spec, 5, 13);
    SyntheticScene synthetic = generate_scene(spec, 6);
    synthetic.scene.id = "det";
    ExecConfig config;

    OracleProvider a(synthetic, 0.3, 9);
    OracleProvider b(synthetic, 0.3, 9);
    ExecutionTrace ta = execute(program, synthetic.scene, a, config);
    ExecutionTrace tb = execute(program, synthetic.scene, b, config);
    REQUIRE(ta.entries.size() == tb.entries.size());
    for (std::size_t i = 0; i < ta.entries.size(); ++i) {
        CHECK(ta.entries[i].node == tb.entries[i].node);
        CHECK(ta.entries[i].restriction == tb.entries[i].restriction);
        CHECK(ta.entries[i].value == tb.entries[i].value);
    }
}
