#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "nmneval/executor.hpp"
#include "nmneval/faithfulness.hpp"
#include "nmneval/program.hpp"

namespace nmneval {

/// A ground-truth object: category, attributes, box, and outgoing relation
/// edges (relation name, target object index). Relations are binary.
struct SyntheticObject {
    std::string category;
    std::set<std::string> attributes;
    BoundingBox box;
    std::vector<std::pair<std::string, std::size_t>> relations;
};

struct GoldWorld {
    double image_width = 0, image_height = 0;
    std::vector<SyntheticObject> objects;

    bool related(std::size_t from, std::size_t to, const std::string& relation) const;
    bool related_any(std::size_t from, std::size_t to) const;
};

struct SceneSpec {
    double image_width = 640, image_height = 480;
    int min_objects_per_image = 1, max_objects_per_image = 4;
    std::vector<std::string> categories = {"dog", "cat", "llama", "ball"};
    std::vector<std::string> attributes = {"black", "white", "spotted"};
    std::vector<std::string> relations = {"holding", "near", "above"};
    double jitter_iou_min = 0.9, jitter_iou_max = 1.0;  // target IOU of proposals to gold boxes
    int min_proposals_per_object = 1, max_proposals_per_object = 1;
    int distractor_proposals = 0;

    void validate() const;
};

struct SyntheticScene {
    Scene scene;
    GoldWorld world;
    /// proposal index -> generating object (SIZE_MAX for distractors)
    std::vector<std::size_t> proposal_object;
};

/// Deterministically generate a two-image world and its jittered proposals.
/// Gold boxes never overlap each other, so IOU > 0.5 alignment is unique.
SyntheticScene generate_scene(const SceneSpec& spec, std::uint64_t seed);

/// Grounding provider that reads the gold world. With noise 0 every score is
/// the IOU-weighted gold membership; noise mixes scores toward seeded uniform
/// draws: score' = (1-eps)*score + eps*u.
class OracleProvider : public GroundingProvider {
  public:
    OracleProvider(const SyntheticScene& scene, double noise, std::uint64_t seed);

    std::vector<double> scores(const GroundingQuery& query) override;
    NumberValue count(const BoxAttention& input, NodeId node,
                      ImageRestriction restriction) override;

  private:
    const SyntheticScene& scene_;
    double noise_;
    std::uint64_t seed_;
};

/// Exact set-semantics value of a program over the gold world. Numbers are
/// exact integers; comparisons clamp into {0..K} exactly as the executor's
/// zero-variance discretization does.
struct GoldValue {
    std::variant<bool, long, std::set<std::size_t>> value;

    bool as_bool() const { return std::get<bool>(value); }
    long as_number() const { return std::get<long>(value); }
    const std::set<std::size_t>& as_objects() const { return std::get<std::set<std::size_t>>(value); }
};

GoldValue evaluate_gold(const Program& program, const GoldWorld& world, int max_count,
                        ImageRestriction restriction = ImageRestriction::Both);

/// Grounding records for one provider call; `kind` disambiguates the two
/// calls a project node makes, `restriction` the per-image macro passes.
struct GroundingRecord {
    NodeId node = 0;
    LearnedKind kind = LearnedKind::Find;
    ImageRestriction restriction = ImageRestriction::Both;
    std::vector<double> scores;
};

struct CountRecord {
    NodeId node = 0;
    ImageRestriction restriction = ImageRestriction::Both;
    NumberValue number;
};

/// Everything the file-based harness needs to rerun one example.
struct SyntheticExample {
    std::string id;
    Program program;
    SyntheticScene scene;
    std::vector<GroundingRecord> groundings;
    std::vector<CountRecord> counts;
    std::vector<VisualAnnotation> annotations;
    GoldValue expected;          // set-semantics denotation
    ExecutionTrace trace;        // oracle execution trace
};

/// Generate a scene for the program, execute it with the oracle provider
/// (recording every provider call), derive gold annotations for each learned
/// box-typed node, and compute the expected denotation by set semantics.
/// The program must use only vocabulary present in the spec.
SyntheticExample generate_example(const std::string& example_id, const Program& program,
                                  const SceneSpec& spec, std::uint64_t seed,
                                  const ExecConfig& config, double noise = 0.0);

/// Random well-typed Boolean program over the visual signature table with at
/// most `max_modules` nodes. Macros appear only at the root; division is
/// never drawn (its operands must have nonzero mean).
Program generate_program(const SceneSpec& spec, std::uint64_t seed, int max_modules = 13);

}  // namespace nmneval
