#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nmneval/types.hpp"

namespace nmneval {

/// Gold boxes for one module instance in one image of one example.
struct VisualAnnotation {
    std::string example_id;
    NodeId node = 0;
    std::string module;
    ImageSide image = ImageSide::Left;
    std::vector<BoundingBox> boxes;
};

/// Gold spans (inclusive token ranges) plus the module's predicted token
/// distribution for one instance.
struct TextAnnotation {
    std::string example_id;
    NodeId node = 0;
    std::string module;
    TokenDist token_dist;
    std::vector<std::pair<int, int>> spans;
};

struct MatchCounts {
    long matched_proposed = 0;  // predicted boxes aligned with a gold box
    long predicted = 0;         // boxes with probability > threshold
    long matched_annotated = 0; // gold boxes aligned with a predicted box
    long annotated = 0;

    MatchCounts& operator+=(const MatchCounts& o);
};

struct Prf {
    double precision = 0, recall = 0, f1 = 0;
};

enum class AggregationScheme { Examplewise, Cumulative, Occurrence };

const char* to_string(AggregationScheme s);
AggregationScheme aggregation_from_name(const std::string& name);

/// What to do with predicted boxes whose best gold IOU lands between the
/// negative threshold and T when a negative threshold is configured.
enum class MidBandPolicy { Exclude, Penalize };

struct MetricConfig {
    double iou_threshold = 0.5;                 // alignment: IOU strictly above
    double prob_threshold = 0.5;                // predicted: probability strictly above
    std::optional<double> neg_iou_threshold;    // precision-only variant
    MidBandPolicy mid_band = MidBandPolicy::Exclude;
    AggregationScheme scheme = AggregationScheme::Examplewise;
};

struct ModuleScore {
    double precision = 0, recall = 0, f1 = 0;
    long examples = 0;  // examples (or occurrences, under that scheme) pooled
};

struct FaithfulnessReport {
    AggregationScheme scheme = AggregationScheme::Examplewise;
    ModuleScore overall;
    std::map<std::string, ModuleScore> modules;
    std::vector<std::pair<std::string, Prf>> per_example;  // id -> overall score
};

/// Alignment relation: gold box i ~ proposal j iff IOU > threshold. The
/// relation is many-to-many, not a matching.
std::vector<std::pair<std::size_t, std::size_t>> align(const std::vector<BoundingBox>& annotated,
                                                       const std::vector<BoundingBox>& proposals,
                                                       double iou_threshold);

/// Count matches for one instance. Only proposals in the annotation's image
/// participate. With a negative threshold set, unmatched predicted boxes in
/// the [neg, T] band are dropped from (or, under Penalize, kept in) the
/// precision denominator.
MatchCounts instance_counts(const VisualAnnotation& annotation, const BoxAttention& attention,
                            const Scene& scene, const MetricConfig& config);

/// Pooled counts -> P/R/F1. Degenerate denominators resolve vacuously:
/// predicted == 0 gives precision 1, annotated == 0 gives recall 1.
Prf score_counts(const MatchCounts& counts);

/// One scored instance, ready for aggregation.
struct InstanceScore {
    std::string example_id;
    std::string module;
    ImageSide image = ImageSide::Left;
    MatchCounts counts;
};

FaithfulnessReport aggregate(const std::vector<InstanceScore>& instances,
                             AggregationScheme scheme);

/// The attention an oracle predictor would emit for an annotation: 1 on every
/// proposal aligned with some gold box, 0 elsewhere.
BoxAttention upper_bound_attention(const VisualAnnotation& annotation, const Scene& scene,
                                   double iou_threshold);

/// Maximal faithfulness conditioned on the proposals: score the upper-bound
/// attentions with the ordinary pipeline.
FaithfulnessReport upper_bound(const std::vector<VisualAnnotation>& annotations,
                               const std::map<std::string, Scene>& scenes,
                               const MetricConfig& config);

/// Cross-entropy of gold spans under the module's token distribution:
/// I = -sum_i log(max(mass of span i, epsilon)).
double text_instance_score(const TokenDist& dist, const std::vector<std::pair<int, int>>& spans);

struct TextModuleScore {
    double cross_entropy = 0;
    long instances = 0;
};

struct TextReport {
    TextModuleScore overall;
    std::map<std::string, TextModuleScore> modules;
    std::vector<std::pair<std::string, double>> per_example;  // id -> mean CE
};

TextReport text_aggregate(const std::vector<TextAnnotation>& annotations);

enum class TestSide { TwoSided, OneSided };

struct PermutationResult {
    double p_value = 1.0;
    double delta_original = 0.0;
    long trials = 0;
    std::uint64_t seed = 0;
};

using ScoreAggregator = std::function<double(const std::vector<double>&)>;

/// Paired permutation test: per trial every pair swaps sides with probability
/// 1/2; p = (#trials with a difference at least as extreme as the original) /
/// trials. Per-trial draws come from a counter-based generator keyed on
/// (seed, trial, pair), so sharding trials cannot change the result.
PermutationResult permutation_test(const std::vector<double>& scores_a,
                                   const std::vector<double>& scores_b, long trials,
                                   std::uint64_t seed, TestSide side = TestSide::TwoSided,
                                   const ScoreAggregator& aggregator = {});

}  // namespace nmneval
