#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nmneval/executor.hpp"
#include "nmneval/faithfulness.hpp"
#include "nmneval/synth.hpp"

#include <nlohmann/json_fwd.hpp>

namespace nmneval {

/// Every knob a command accepts; echoed verbatim into report metadata.
struct RunConfig {
    MetricConfig metric;
    ExecConfig exec;
    long trials = 100000;
    std::uint64_t seed = 0;
    bool with_upper_bound = false;
    TestSide test_side = TestSide::TwoSided;

    void validate() const;
};

struct ProgramRecord {
    std::string id;
    std::string utterance;  // may be empty
    std::string program;
};

/// One example's grounding records, file form of the provider contract.
struct GroundingFileEntry {
    std::vector<GroundingRecord> scores;
    std::vector<CountRecord> counts;
};

struct TraceRecord {
    std::string id;
    NodeId node = 0;
    ImageRestriction restriction = ImageRestriction::Both;
    std::string module;
    Value value;
};

// ---- newline-delimited JSON readers (validate everything before returning)

std::vector<ProgramRecord> read_programs(const std::string& path);
std::map<std::string, Scene> read_scenes(const std::string& path);
std::map<std::string, GroundingFileEntry> read_groundings(const std::string& path);
std::vector<VisualAnnotation> read_visual_annotations(const std::string& path);
std::vector<TextAnnotation> read_text_annotations(const std::string& path);
std::vector<TraceRecord> read_trace(const std::string& path);
SceneSpec read_scene_spec(const std::string& path);
SignatureTable read_signature_table(const std::string& path);

/// Per-node token distributions ({id, node, scores}) used by eval-text when
/// module outputs live outside the annotations file.
std::map<std::pair<std::string, NodeId>, TokenDist> read_token_dists(const std::string& path);

// ---- writers (deterministic byte-for-byte for fixed inputs)

void write_trace(std::ostream& out, const std::vector<TraceRecord>& records);
void write_groundings(std::ostream& out, const std::string& id, const GroundingFileEntry& entry);
void write_scene(std::ostream& out, const Scene& scene);
void write_visual_annotations(std::ostream& out, const std::vector<VisualAnnotation>& annotations);
void write_expected(std::ostream& out, const std::string& id, const GoldValue& expected);

nlohmann::json report_to_json(const FaithfulnessReport& report,
                              const std::optional<FaithfulnessReport>& upper,
                              const RunConfig& config);
nlohmann::json text_report_to_json(const TextReport& report, const RunConfig& config);
nlohmann::json permutation_to_json(const PermutationResult& result, const std::string& metric,
                                   long examples, TestSide side);

/// Fixed-width table: Prec. / Rec. / F1 columns plus one per-module F1 column.
std::string report_table(const FaithfulnessReport& report,
                         const std::optional<FaithfulnessReport>& upper);
std::string text_report_table(const TextReport& report);

/// Provider backed by a groundings file entry. Lookup is by (node, kind,
/// restriction) with fallback to the unrestricted record; a missing record
/// raises ValidationError naming the example, node and kind.
class FileProvider : public GroundingProvider {
  public:
    FileProvider(std::string example_id, const GroundingFileEntry& entry);

    std::vector<double> scores(const GroundingQuery& query) override;
    NumberValue count(const BoxAttention& input, NodeId node,
                      ImageRestriction restriction) override;

  private:
    std::string example_id_;
    const GroundingFileEntry& entry_;
};

}  // namespace nmneval
