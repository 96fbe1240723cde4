#include "nmneval/faithfulness.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nmneval/rng.hpp"

namespace nmneval {

MatchCounts& MatchCounts::operator+=(const MatchCounts& o) {
    matched_proposed += o.matched_proposed;
    predicted += o.predicted;
    matched_annotated += o.matched_annotated;
    annotated += o.annotated;
    return *this;
}

const char* to_string(AggregationScheme s) {
    switch (s) {
        case AggregationScheme::Examplewise: return "examplewise";
        case AggregationScheme::Cumulative: return "cumulative";
        case AggregationScheme::Occurrence: return "occurrence";
    }
    return "?";
}

AggregationScheme aggregation_from_name(const std::string& name) {
    if (name == "examplewise") return AggregationScheme::Examplewise;
    if (name == "cumulative") return AggregationScheme::Cumulative;
    if (name == "occurrence") return AggregationScheme::Occurrence;
    throw ValidationError("unknown aggregation scheme: " + name);
}

std::vector<std::pair<std::size_t, std::size_t>> align(const std::vector<BoundingBox>& annotated,
                                                       const std::vector<BoundingBox>& proposals,
                                                       double iou_threshold) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < annotated.size(); ++i)
        for (std::size_t j = 0; j < proposals.size(); ++j)
            if (iou(annotated[i], proposals[j]) > iou_threshold) edges.emplace_back(i, j);
    return edges;
}

MatchCounts instance_counts(const VisualAnnotation& annotation, const BoxAttention& attention,
                            const Scene& scene, const MetricConfig& config) {
    attention.validate(scene.size());
    for (const auto& box : annotation.boxes) box.validate();

    MatchCounts counts;
    counts.annotated = static_cast<long>(annotation.boxes.size());

    std::vector<bool> gold_matched(annotation.boxes.size(), false);
    for (std::size_t j = 0; j < scene.size(); ++j) {
        if (scene.proposals[j].image != annotation.image) continue;
        bool predicted = attention.probs[j] > config.prob_threshold;
        if (!predicted) continue;

        double best = 0.0;
        for (std::size_t i = 0; i < annotation.boxes.size(); ++i) {
            double v = iou(annotation.boxes[i], scene.proposals[j]);
            best = std::max(best, v);
            if (v > config.iou_threshold) gold_matched[i] = true;
        }

        if (best > config.iou_threshold) {
            ++counts.matched_proposed;
            ++counts.predicted;
        } else if (!config.neg_iou_threshold) {
            ++counts.predicted;
        } else if (best < *config.neg_iou_threshold) {
            ++counts.predicted;  // clear false positive
        } else if (config.mid_band == MidBandPolicy::Penalize) {
            ++counts.predicted;  // near miss, still charged against precision
        }
        // near miss under Exclude: leave it out of the denominator entirely
    }
    counts.matched_annotated =
        static_cast<long>(std::count(gold_matched.begin(), gold_matched.end(), true));
    return counts;
}

Prf score_counts(const MatchCounts& counts) {
    Prf out;
    out.precision = counts.predicted == 0
                        ? 1.0
                        : static_cast<double>(counts.matched_proposed) / counts.predicted;
    out.recall = counts.annotated == 0
                     ? 1.0
                     : static_cast<double>(counts.matched_annotated) / counts.annotated;
    out.f1 = out.precision + out.recall == 0.0
                 ? 0.0
                 : 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

namespace {

ModuleScore mean_of(const std::vector<Prf>& scores) {
    ModuleScore out;
    out.examples = static_cast<long>(scores.size());
    if (scores.empty()) return out;
    for (const auto& s : scores) {
        out.precision += s.precision;
        out.recall += s.recall;
        out.f1 += s.f1;
    }
    out.precision /= scores.size();
    out.recall /= scores.size();
    out.f1 /= scores.size();
    return out;
}

ModuleScore from_pooled(const MatchCounts& counts, long examples) {
    Prf s = score_counts(counts);
    return ModuleScore{s.precision, s.recall, s.f1, examples};
}

}  // namespace

FaithfulnessReport aggregate(const std::vector<InstanceScore>& instances,
                             AggregationScheme scheme) {
    if (instances.empty()) throw ValidationError("cannot aggregate an empty score set");

    FaithfulnessReport report;
    report.scheme = scheme;

    // Examples in sorted id order; module names collected across all of them.
    std::set<std::string> example_ids, module_names;
    for (const auto& inst : instances) {
        example_ids.insert(inst.example_id);
        module_names.insert(inst.module);
    }

    auto pooled = [&](const std::string& example, const std::string& module, bool& any) {
        MatchCounts counts;
        any = false;
        for (const auto& inst : instances) {
            if (!example.empty() && inst.example_id != example) continue;
            if (!module.empty() && inst.module != module) continue;
            counts += inst.counts;
            any = true;
        }
        return counts;
    };

    // Per-example overall scores are reported for every scheme; they feed the
    // paired permutation test.
    for (const auto& id : example_ids) {
        bool any = false;
        MatchCounts counts = pooled(id, "", any);
        report.per_example.emplace_back(id, score_counts(counts));
    }

    switch (scheme) {
        case AggregationScheme::Examplewise: {
            for (const auto& module : module_names) {
                std::vector<Prf> scores;
                for (const auto& id : example_ids) {
                    bool any = false;
                    MatchCounts counts = pooled(id, module, any);
                    if (any) scores.push_back(score_counts(counts));
                }
                report.modules[module] = mean_of(scores);
            }
            std::vector<Prf> overall;
            overall.reserve(report.per_example.size());
            for (const auto& [id, s] : report.per_example) overall.push_back(s);
            report.overall = mean_of(overall);
            break;
        }
        case AggregationScheme::Cumulative: {
            for (const auto& module : module_names) {
                MatchCounts counts;
                std::set<std::string> touched;
                for (const auto& inst : instances)
                    if (inst.module == module) {
                        counts += inst.counts;
                        touched.insert(inst.example_id);
                    }
                report.modules[module] = from_pooled(counts, static_cast<long>(touched.size()));
            }
            MatchCounts all;
            for (const auto& inst : instances) all += inst.counts;
            report.overall = from_pooled(all, static_cast<long>(example_ids.size()));
            break;
        }
        case AggregationScheme::Occurrence: {
            for (const auto& module : module_names) {
                std::vector<Prf> scores;
                for (const auto& inst : instances)
                    if (inst.module == module) scores.push_back(score_counts(inst.counts));
                report.modules[module] = mean_of(scores);
            }
            std::vector<Prf> scores;
            scores.reserve(instances.size());
            for (const auto& inst : instances) scores.push_back(score_counts(inst.counts));
            report.overall = mean_of(scores);
            break;
        }
    }
    return report;
}

BoxAttention upper_bound_attention(const VisualAnnotation& annotation, const Scene& scene,
                                   double iou_threshold) {
    BoxAttention out;
    out.probs.assign(scene.size(), 0.0);
    for (std::size_t j = 0; j < scene.size(); ++j) {
        if (scene.proposals[j].image != annotation.image) continue;
        for (const auto& gold : annotation.boxes) {
            if (iou(gold, scene.proposals[j]) > iou_threshold) {
                out.probs[j] = 1.0;
                break;
            }
        }
    }
    return out;
}

FaithfulnessReport upper_bound(const std::vector<VisualAnnotation>& annotations,
                               const std::map<std::string, Scene>& scenes,
                               const MetricConfig& config) {
    std::vector<InstanceScore> instances;
    instances.reserve(annotations.size());
    for (const auto& annotation : annotations) {
        auto scene_it = scenes.find(annotation.example_id);
        if (scene_it == scenes.end())
            throw ValidationError("annotation references unknown example '" +
                                  annotation.example_id + "'");
        BoxAttention oracle =
            upper_bound_attention(annotation, scene_it->second, config.iou_threshold);
        instances.push_back(InstanceScore{
            annotation.example_id, annotation.module, annotation.image,
            instance_counts(annotation, oracle, scene_it->second, config)});
    }
    return aggregate(instances, config.scheme);
}

double text_instance_score(const TokenDist& dist, const std::vector<std::pair<int, int>>& spans) {
    if (spans.empty()) throw ValidationError("text instance has no gold spans");
    for (double p : dist.probs)
        if (!(p >= 0.0)) throw ValidationError("token distribution has negative entry");

    constexpr double kEpsilon = 1e-12;
    double total = 0.0;
    for (const auto& [start, end] : spans) {
        if (start < 0 || end < start || end >= static_cast<int>(dist.probs.size()))
            throw ValidationError("gold span [" + std::to_string(start) + ", " +
                                  std::to_string(end) + "] is out of range");
        double mass = 0.0;
        for (int j = start; j <= end; ++j) mass += dist.probs[static_cast<std::size_t>(j)];
        total -= std::log(std::clamp(mass, kEpsilon, 1.0));
    }
    return total;
}

TextReport text_aggregate(const std::vector<TextAnnotation>& annotations) {
    if (annotations.empty()) throw ValidationError("cannot aggregate an empty score set");

    TextReport report;
    std::map<std::string, std::vector<double>> by_module;
    std::map<std::string, std::vector<double>> by_example;
    std::vector<double> all;
    for (const auto& a : annotations) {
        double score = text_instance_score(a.token_dist, a.spans);
        by_module[a.module].push_back(score);
        by_example[a.example_id].push_back(score);
        all.push_back(score);
    }
    auto mean = [](const std::vector<double>& v) { return stable_sum(v) / v.size(); };
    for (const auto& [module, scores] : by_module)
        report.modules[module] = TextModuleScore{mean(scores), static_cast<long>(scores.size())};
    report.overall = TextModuleScore{mean(all), static_cast<long>(all.size())};
    for (const auto& [id, scores] : by_example) report.per_example.emplace_back(id, mean(scores));
    return report;
}

PermutationResult permutation_test(const std::vector<double>& scores_a,
                                   const std::vector<double>& scores_b, long trials,
                                   std::uint64_t seed, TestSide side,
                                   const ScoreAggregator& aggregator) {
    if (scores_a.size() != scores_b.size())
        throw ValidationError("permutation test requires equal-length paired score lists");
    if (scores_a.empty()) throw ValidationError("permutation test requires at least one pair");
    if (trials < 1) throw ValidationError("permutation test requires at least one trial");

    ScoreAggregator agg = aggregator;
    if (!agg)
        agg = [](const std::vector<double>& v) { return stable_sum(v) / v.size(); };

    const double delta_original = agg(scores_a) - agg(scores_b);
    const std::size_t n = scores_a.size();

    std::vector<double> a(n), b(n);
    long exceed = 0;
    for (long t = 0; t < trials; ++t) {
        for (std::size_t j = 0; j < n; ++j) {
            // Counter-based draw: sharding trials across workers cannot
            // change any per-pair decision.
            bool swap = hash_u64(seed, static_cast<std::uint64_t>(t), j) & 1ULL;
            a[j] = swap ? scores_b[j] : scores_a[j];
            b[j] = swap ? scores_a[j] : scores_b[j];
        }
        double delta = agg(a) - agg(b);
        bool extreme = side == TestSide::TwoSided
                           ? std::fabs(delta) >= std::fabs(delta_original)
                           : (delta_original >= 0 ? delta >= delta_original
                                                  : delta <= delta_original);
        if (extreme) ++exceed;
    }
    return PermutationResult{static_cast<double>(exceed) / static_cast<double>(trials),
                             delta_original, trials, seed};
}

}  // namespace nmneval
