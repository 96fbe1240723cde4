#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nmneval/prob.hpp"
#include "nmneval/program.hpp"
#include "nmneval/types.hpp"

namespace nmneval {

enum class LearnedKind { Find, Filter, WithRelation, Project };

const char* to_string(LearnedKind k);
LearnedKind learned_kind_from_name(const std::string& canonical_name);

/// Which proposals a macro execution is allowed to see. Composes by
/// intersection, so nested macros stay well-defined.
enum class ImageRestriction { Both, Left, Right, Neither };

ImageRestriction compose(ImageRestriction outer, ImageRestriction inner);
bool allows(ImageRestriction r, ImageSide side);
std::string to_string(ImageRestriction r);

/// One learned-module evaluation. `inputs` carries the already-computed child
/// attentions; `restriction` identifies the macro context of the call.
struct GroundingQuery {
    LearnedKind kind = LearnedKind::Find;
    std::string utterance;
    std::vector<BoxAttention> inputs;
    NodeId node = 0;
    ImageRestriction restriction = ImageRestriction::Both;
};

/// Supplies the learned factors of find/filter/with-relation/project (and,
/// optionally, an externally computed count). Implementations must be
/// deterministic for fixed inputs and return per-proposal scores in [0,1].
class GroundingProvider {
  public:
    virtual ~GroundingProvider() = default;

    virtual std::vector<double> scores(const GroundingQuery& query) = 0;

    /// Externally supplied count (the Layer-count / Graph-count stand-in).
    /// Only consulted when the count strategy is Provider.
    virtual NumberValue count(const BoxAttention& input, NodeId node,
                              ImageRestriction restriction);
};

enum class CountStrategy { Sum, Overlap, Provider };

const char* to_string(CountStrategy s);
CountStrategy count_strategy_from_name(const std::string& name);

struct ExecConfig {
    int max_count = 72;        // K
    double sigma_sq = 0.25;    // count variance
    CountStrategy count_strategy = CountStrategy::Sum;
    double cluster_iou = 0.5;  // overlap-aware clustering threshold
};

struct TraceEntry {
    NodeId node = 0;
    ImageRestriction restriction = ImageRestriction::Both;
    Value value;
};

/// Every intermediate value produced while executing a program. Nodes outside
/// macros appear once (restriction Both); nodes inside a macro appear once per
/// image the macro ran them on.
struct ExecutionTrace {
    std::vector<TraceEntry> entries;
    Value denotation;

    const Value* find(NodeId node, ImageRestriction r = ImageRestriction::Both) const;
    const Value& at(NodeId node, ImageRestriction r = ImageRestriction::Both) const;
};

/// Execute a typechecked program over a scene. Learned nodes are resolved
/// through the provider; everything else is computed in closed form.
ExecutionTrace execute(const Program& program, const Scene& scene, GroundingProvider& provider,
                       const ExecConfig& config);

/// Algebraic composition of a learned module around the provider's scores:
///   find:          scores
///   filter:        p ⊙ scores
///   with-relation: max(p2) * p1 ⊙ scores
///   project:       max(p) * find_scores ⊙ scores   (inputs = {p, find_scores})
BoxAttention compose_learned(LearnedKind kind, const std::vector<BoxAttention>& inputs,
                             const std::vector<double>& scores);

BoxAttention intersect(const BoxAttention& p1, const BoxAttention& p2);
BoxAttention discard(const BoxAttention& p1, const BoxAttention& p2);

/// Zero out the proposals that are not in `side`.
BoxAttention restrict_to_image(const BoxAttention& p, ImageSide side, const Scene& scene);

/// Sum-count: Number(sum of probabilities, sigma_sq).
NumberValue count_sum(const BoxAttention& p, double sigma_sq);

/// Deterministic overlap-aware count: single-link clusters of proposals with
/// pairwise IOU > cluster_iou each contribute their maximum probability.
NumberValue count_overlap_aware(const BoxAttention& p, const Scene& scene, double cluster_iou,
                                double sigma_sq);

/// exist(p) = greater-equal(count(p), 1).
TruthProb exist(const BoxAttention& p, const Scene& scene, GroundingProvider& provider,
                const ExecConfig& config, NodeId node,
                ImageRestriction restriction = ImageRestriction::Both);

}  // namespace nmneval
