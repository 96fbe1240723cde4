// Acceptance suite: runs every release criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "nmneval/faithfulness.hpp"
#include "nmneval/io.hpp"
#include "nmneval/prob.hpp"
#include "nmneval/rng.hpp"
#include "nmneval/synth.hpp"

using namespace nmneval;

namespace {

struct Check {
    std::string name;
    std::function<std::string()> run;  // empty string = pass, otherwise failure detail
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fail(const std::string& message) { return message; }

// Measured faithfulness of one synthetic example's oracle execution.
std::vector<InstanceScore> measured_instances(const SyntheticExample& example,
                                              const MetricConfig& config) {
    std::vector<InstanceScore> instances;
    for (const auto& annotation : example.annotations) {
        ImageRestriction ctx = annotation.image == ImageSide::Left ? ImageRestriction::Left
                                                                   : ImageRestriction::Right;
        const Value* value = example.trace.find(annotation.node, ctx);
        if (!value) value = example.trace.find(annotation.node, ImageRestriction::Both);
        if (!value) throw std::logic_error("trace is missing an annotated node");
        instances.push_back(InstanceScore{
            annotation.example_id, annotation.module, annotation.image,
            instance_counts(annotation, std::get<BoxAttention>(*value), example.scene.scene,
                            config)});
    }
    return instances;
}

std::string check_upper_bound_precision() {
    auto start = std::chrono::steady_clock::now();
    MetricConfig config;
    std::map<std::string, Scene> scenes;
    std::vector<VisualAnnotation> annotations;
    long aligned_examples = 0;
    for (int i = 0; i < 500; ++i) {
        SceneSpec spec;
        spec.jitter_iou_min = i % 2 == 0 ? 0.55 : 0.85;
        spec.jitter_iou_max = 1.0;
        spec.distractor_proposals = 3;
        SyntheticScene scene = generate_scene(spec, 100000 + i);
        std::string id = "ub" + std::to_string(i);
        scene.scene.id = id;

        VisualAnnotation a;
        a.example_id = id;
        a.node = 0;
        a.module = "find";
        a.image = ImageSide::Left;
        for (const auto& object : scene.world.objects)
            if (object.box.image == ImageSide::Left) a.boxes.push_back(object.box);
        if (!align(a.boxes, scene.scene.proposals, config.iou_threshold).empty())
            ++aligned_examples;
        annotations.push_back(std::move(a));
        scenes.emplace(id, scene.scene);
    }
    FaithfulnessReport report = upper_bound(annotations, scenes, config);
    for (const auto& [id, score] : report.per_example)
        if (score.precision != 1.0)
            return fail("example " + id + " has upper-bound precision " +
                        std::to_string(score.precision));
    if (report.overall.precision != 1.0) return fail("overall upper-bound precision below 1");
    if (aligned_examples < 400) return fail("fixture generated too few aligned examples");
    double elapsed = seconds_since(start);
    if (elapsed >= 1.0)
        return fail("took " + std::to_string(elapsed) + " s for 500 examples (limit 1 s)");
    return {};
}

std::string check_oracle_equality() {
    SceneSpec spec;
    spec.jitter_iou_min = 0.95;
    spec.jitter_iou_max = 1.0;
    spec.min_proposals_per_object = 1;
    spec.max_proposals_per_object = 2;
    spec.distractor_proposals = 3;
    MetricConfig metric;
    ExecConfig config;

    std::vector<InstanceScore> measured;
    std::vector<VisualAnnotation> annotations;
    std::map<std::string, Scene> scenes;
    for (int i = 0; i < 200; ++i) {
        Program program = generate_program(spec, 200000 + i, 9);
        std::string id = "oe" + std::to_string(i);
        SyntheticExample example = generate_example(id, program, spec, 210000 + i, config, 0.0);
        auto instances = measured_instances(example, metric);
        measured.insert(measured.end(), instances.begin(), instances.end());
        annotations.insert(annotations.end(), example.annotations.begin(),
                           example.annotations.end());
        scenes.emplace(id, example.scene.scene);
    }
    FaithfulnessReport got = aggregate(measured, metric.scheme);
    FaithfulnessReport best = upper_bound(annotations, scenes, metric);
    if (std::fabs(got.overall.f1 - best.overall.f1) > 1e-9)
        return fail("measured F1 " + std::to_string(got.overall.f1) + " vs upper bound " +
                    std::to_string(best.overall.f1));
    if (std::fabs(got.overall.precision - best.overall.precision) > 1e-9)
        return fail("precision differs from the upper bound");
    if (std::fabs(got.overall.recall - best.overall.recall) > 1e-9)
        return fail("recall differs from the upper bound");
    if (got.per_example.size() != best.per_example.size())
        return fail("per-example coverage differs from the upper bound");
    for (std::size_t i = 0; i < got.per_example.size(); ++i) {
        if (got.per_example[i].first != best.per_example[i].first ||
            std::fabs(got.per_example[i].second.f1 - best.per_example[i].second.f1) > 1e-9)
            return fail("example " + got.per_example[i].first +
                        " deviates from its upper bound");
    }
    return {};
}

std::string check_order_partition() {
    Rng rng(300000);
    for (int i = 0; i < 1000; ++i) {
        NumberValue a{rng.uniform(-5.0, 80.0), rng.uniform(0.0, 25.0)};
        NumberValue b{rng.uniform(-5.0, 80.0), rng.uniform(0.0, 25.0)};
        double lt = compare(CompareKind::Less, a, b, 72).value;
        double eq = compare(CompareKind::Equal, a, b, 72).value;
        double gt = compare(CompareKind::Greater, a, b, 72).value;
        double ge = compare(CompareKind::GreaterEqual, a, b, 72).value;
        double le = compare(CompareKind::LessEqual, a, b, 72).value;
        if (std::fabs(lt + eq + gt - 1.0) > 1e-9)
            return fail("less+equal+greater deviates by " +
                        std::to_string(std::fabs(lt + eq + gt - 1.0)));
        if (std::fabs(ge + lt - 1.0) > 1e-9) return fail("greater-equal + less deviates from 1");
        if (std::fabs(le + gt - 1.0) > 1e-9) return fail("less-equal + greater deviates from 1");
    }
    return {};
}

std::string check_discretization_normalization() {
    Rng rng(400000);
    for (int i = 0; i < 1000; ++i) {
        double mean = rng.uniform(-30.0, 110.0);
        double var = rng.bernoulli(0.1) ? 0.0 : rng.uniform(1e-9, 60.0);
        int k_max = static_cast<int>(rng.uniform_int(1, 72));
        CategoricalCount c = discretize(NumberValue{mean, var}, k_max);
        double total = stable_sum(c.probs);
        if (std::fabs(total - 1.0) > 1e-12)
            return fail("categorical sums to " + std::to_string(total));
    }
    return {};
}

std::string check_sum_count_pathology() {
    NumberValue twenty = count_sum(BoxAttention(std::vector<double>(20, 0.05)), 0.25);
    if (twenty.mean != 1.0)
        return fail("sum-count of 20 x 0.05 gave " + std::to_string(twenty.mean));

    Scene scene;
    scene.id = "dup";
    scene.proposals.assign(20, BoundingBox{0, 0, 10, 10, ImageSide::Left});
    NumberValue overlap = count_overlap_aware(BoxAttention(std::vector<double>(20, 0.05)),
                                              scene, 0.5, 0.25);
    if (overlap.mean != 0.05)
        return fail("overlap-aware count of one duplicated box gave " +
                    std::to_string(overlap.mean));
    return {};
}

std::string check_metric_fixture() {
    // One gold box aligned with five identical proposals; the module selects one.
    Scene scene;
    scene.id = "b1";
    scene.proposals.assign(5, BoundingBox{0, 0, 10, 10, ImageSide::Left});
    VisualAnnotation a;
    a.example_id = "b1";
    a.node = 0;
    a.module = "find";
    a.image = ImageSide::Left;
    a.boxes = {BoundingBox{0, 0, 10, 10, ImageSide::Left}};
    MetricConfig config;
    Prf one = score_counts(instance_counts(a, BoxAttention({1, 0, 0, 0, 0}), scene, config));
    if (one.precision != 1.0 || one.recall != 1.0 || one.f1 != 1.0)
        return fail("five-proposal scenario scored P=" + std::to_string(one.precision) +
                    " R=" + std::to_string(one.recall));

    // Two-example fixture where examplewise F1 != harmonic(mean P, mean R).
    std::vector<InstanceScore> instances{
        InstanceScore{"e1", "find", ImageSide::Left, MatchCounts{1, 1, 1, 1}},
        InstanceScore{"e2", "find", ImageSide::Left, MatchCounts{1, 1, 1, 3}}};
    FaithfulnessReport report = aggregate(instances, AggregationScheme::Examplewise);
    double harmonic = 2 * report.overall.precision * report.overall.recall /
                      (report.overall.precision + report.overall.recall);
    if (std::fabs(report.overall.f1 - harmonic) < 1e-6)
        return fail("examplewise F1 coincides with the harmonic mean on the fixture");
    return {};
}

std::string check_text_closed_forms() {
    double zero = text_instance_score(TokenDist{{1.0, 0.0}}, {{0, 0}});
    if (zero != 0.0) return fail("full span mass should score 0");
    double half = text_instance_score(TokenDist{{0.5, 0.5}}, {{0, 0}});
    if (std::fabs(half - std::log(2.0)) > 1e-12)
        return fail("half mass scored " + std::to_string(half));
    double two = text_instance_score(TokenDist{{0.5, 0.25, 0.25}}, {{0, 0}, {1, 1}});
    if (std::fabs(two - 2.0794) > 1e-4)
        return fail("two-span instance scored " + std::to_string(two));
    return {};
}

std::string check_permutation_test() {
    auto start = std::chrono::steady_clock::now();

    std::vector<double> same{0.25, 0.5, 0.75, 0.9};
    if (permutation_test(same, same, 100000, 1).p_value != 1.0)
        return fail("identical scores should give p = 1.0 exactly");

    Rng rng(500000);
    std::vector<double> a, b;
    for (int i = 0; i < 50; ++i) {
        double base = rng.uniform(0.2, 0.6);
        a.push_back(base + 0.3);
        b.push_back(base);
    }
    PermutationResult separated = permutation_test(a, b, 100000, 2);
    if (!(separated.p_value < 0.001))
        return fail("constant 0.3 gap gave p = " + std::to_string(separated.p_value));

    int above = 0;
    for (int sim = 0; sim < 100; ++sim) {
        Rng null_rng(510000 + sim);
        std::vector<double> x, y;
        for (int i = 0; i < 60; ++i) {
            x.push_back(null_rng.uniform());
            y.push_back(null_rng.uniform());
        }
        if (permutation_test(x, y, 2000, 520000 + sim).p_value > 0.05) ++above;
    }
    if (above < 90)
        return fail("only " + std::to_string(above) + "/100 null simulations had p > 0.05");

    double elapsed = seconds_since(start);
    if (elapsed >= 10.0)
        return fail("took " + std::to_string(elapsed) + " s (limit 10 s)");
    return {};
}

std::string check_set_semantics_equivalence() {
    auto start = std::chrono::steady_clock::now();
    SceneSpec spec;
    spec.jitter_iou_min = 1.0;
    spec.jitter_iou_max = 1.0;
    spec.min_proposals_per_object = 1;
    spec.max_proposals_per_object = 1;
    spec.distractor_proposals = 0;
    ExecConfig config;
    config.sigma_sq = 0.0;

    for (int i = 0; i < 500; ++i) {
        Program program = generate_program(spec, 600000 + i, 13);
        SyntheticExample example =
            generate_example("fz" + std::to_string(i), program, spec, 610000 + i, config);
        double value = std::get<TruthProb>(example.trace.denotation).value;
        bool expected = example.expected.as_bool();
        if ((value > 0.5) != expected)
            return fail("disagreement on seed " + std::to_string(i) + ": executor " +
                        std::to_string(value) + ", set semantics " +
                        (expected ? "true" : "false") + " for " + linearize(program));
    }
    double elapsed = seconds_since(start);
    if (elapsed >= 60.0)
        return fail("took " + std::to_string(elapsed) + " s (limit 60 s)");
    return {};
}

std::string check_division_formula() {
    NumberValue q =
        gaussian_arith(GaussianArithKind::Division, NumberValue{4, 0.1}, NumberValue{2, 0.1});
    double mean = 4.0 / 2.0 + 0.1 * 4.0 / (2.0 * 2.0 * 2.0);
    double var = (4.0 * 4.0) / (2.0 * 2.0) * (0.1 / (4.0 * 4.0) + 0.1 / (2.0 * 2.0));
    if (q.mean != mean || q.var != var) return fail("division deviates from the formula");
    if (std::fabs(q.mean - 2.05) > 1e-12 || std::fabs(q.var - 0.125) > 1e-12)
        return fail("division gave N(" + std::to_string(q.mean) + ", " + std::to_string(q.var) +
                    ") instead of N(2.05, 0.125)");
    return {};
}

}  // namespace

int main() {
    std::vector<Check> checks{
        {"upper-bound-precision-is-one", check_upper_bound_precision},
        {"oracle-equality-with-upper-bound", check_oracle_equality},
        {"order-partition-identity", check_order_partition},
        {"discretization-normalization", check_discretization_normalization},
        {"sum-count-pathology", check_sum_count_pathology},
        {"metric-fixtures", check_metric_fixture},
        {"text-metric-closed-forms", check_text_closed_forms},
        {"permutation-test", check_permutation_test},
        {"set-semantics-equivalence", check_set_semantics_equivalence},
        {"division-formula-spot-check", check_division_formula},
    };

    int failures = 0;
    for (const auto& check : checks) {
        auto start = std::chrono::steady_clock::now();
        std::string message;
        try {
            message = check.run();
        } catch (const std::exception& e) {
            message = std::string("exception: ") + e.what();
        }
        double elapsed = seconds_since(start);
        if (message.empty()) {
            std::printf("[PASS] %-36s (%.2f s)\n", check.name.c_str(), elapsed);
        } else {
            std::printf("[FAIL] %-36s %s\n", check.name.c_str(), message.c_str());
            ++failures;
        }
    }
    std::printf("%d/%zu acceptance criteria passed\n", static_cast<int>(checks.size()) - failures,
                checks.size());
    return failures == 0 ? 0 : 1;
}
