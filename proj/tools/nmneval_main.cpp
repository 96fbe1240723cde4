// nmneval: execute module programs over box groundings, score module-wise
// faithfulness against gold annotations, and generate synthetic benchmarks.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <tuple>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nmneval/io.hpp"
#include "nmneval/rng.hpp"

using namespace nmneval;
using nlohmann::json;

namespace {

struct CommonFlags {
    RunConfig config;
    std::string aggregation = "examplewise";
    std::string count_strategy = "sum";
    std::string mid_band = "exclude";
    double neg_iou = -1.0;
    bool one_sided = false;

    void resolve() {
        config.metric.scheme = aggregation_from_name(aggregation);
        config.exec.count_strategy = count_strategy_from_name(count_strategy);
        if (mid_band == "exclude") config.metric.mid_band = MidBandPolicy::Exclude;
        else if (mid_band == "penalize") config.metric.mid_band = MidBandPolicy::Penalize;
        else throw ValidationError("unknown mid-band policy: " + mid_band);
        if (neg_iou >= 0.0) config.metric.neg_iou_threshold = neg_iou;
        config.test_side = one_sided ? TestSide::OneSided : TestSide::TwoSided;
        config.validate();
    }
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--iou-threshold", flags.config.metric.iou_threshold,
                    "Alignment IOU threshold T (strictly above)")
        ->capture_default_str();
    cmd->add_option("--neg-iou-threshold", flags.neg_iou,
                    "Negative IOU threshold for the precision-only variant");
    cmd->add_option("--prob-threshold", flags.config.metric.prob_threshold,
                    "Probability above which a proposal counts as predicted")
        ->capture_default_str();
    cmd->add_option("--aggregation", flags.aggregation,
                    "Score aggregation: examplewise|cumulative|occurrence")
        ->capture_default_str();
    cmd->add_option("--mid-band", flags.mid_band,
                    "Near-miss handling with a negative threshold: exclude|penalize")
        ->capture_default_str();
    cmd->add_option("--count-strategy", flags.count_strategy,
                    "Count architecture: sum|overlap|provider")
        ->capture_default_str();
    cmd->add_option("--sigma-sq", flags.config.exec.sigma_sq, "Count variance")
        ->capture_default_str();
    cmd->add_option("--max-count", flags.config.exec.max_count, "Maximum count value K")
        ->capture_default_str();
    cmd->add_option("--cluster-iou", flags.config.exec.cluster_iou,
                    "IOU threshold for overlap-aware count clustering")
        ->capture_default_str();
    cmd->add_option("--trials", flags.config.trials, "Permutation test trials")
        ->capture_default_str();
    cmd->add_option("--seed", flags.config.seed, "Random seed")->capture_default_str();
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open output file: " + path);
    return out;
}

SignatureTable load_table(const std::string& signatures_path) {
    return signatures_path.empty() ? SignatureTable::visual()
                                   : read_signature_table(signatures_path);
}

// ---- exec -----------------------------------------------------------------

int cmd_exec(const std::string& programs_path, const std::string& scenes_path,
             const std::string& groundings_path, const std::string& out_path,
             const std::string& signatures_path, CommonFlags& flags) {
    flags.resolve();
    SignatureTable table = load_table(signatures_path);
    auto programs = read_programs(programs_path);
    auto scenes = read_scenes(scenes_path);
    auto groundings = read_groundings(groundings_path);
    static const GroundingFileEntry kEmptyEntry;

    std::vector<TraceRecord> records;
    for (const auto& rec : programs) {
        Program program = parse_typed(rec.program, table);
        auto scene_it = scenes.find(rec.id);
        if (scene_it == scenes.end())
            throw ValidationError("example '" + rec.id + "' has no scene record");
        auto grounding_it = groundings.find(rec.id);
        const GroundingFileEntry& entry =
            grounding_it == groundings.end() ? kEmptyEntry : grounding_it->second;
        FileProvider provider(rec.id, entry);
        ExecutionTrace trace;
        try {
            trace = execute(program, scene_it->second, provider, flags.config.exec);
        } catch (const ValidationError& e) {
            throw ValidationError("example '" + rec.id + "': " + e.what());
        }
        for (const auto& entry_value : trace.entries)
            records.push_back(TraceRecord{rec.id, entry_value.node, entry_value.restriction,
                                          program.node(entry_value.node).module,
                                          entry_value.value});
    }
    std::stable_sort(records.begin(), records.end(),
                     [](const TraceRecord& a, const TraceRecord& b) { return a.id < b.id; });
    auto out = open_output(out_path);
    write_trace(out, records);
    return 0;
}

// ---- eval-visual ----------------------------------------------------------

std::map<std::tuple<std::string, NodeId, ImageRestriction>, BoxAttention>
load_attention_index(const std::string& path) {
    std::map<std::tuple<std::string, NodeId, ImageRestriction>, BoxAttention> index;
    std::ifstream probe(path);
    if (!probe) throw ValidationError("cannot open file: " + path);
    std::string first_line;
    while (std::getline(probe, first_line) &&
           first_line.find_first_not_of(" \t\r") == std::string::npos) {
    }
    bool is_trace = first_line.find("\"value\"") != std::string::npos;

    if (is_trace) {
        for (const auto& rec : read_trace(path))
            if (const auto* attention = std::get_if<BoxAttention>(&rec.value))
                index[{rec.id, rec.node, rec.restriction}] = *attention;
    } else {
        for (const auto& [id, entry] : read_groundings(path))
            for (const auto& rec : entry.scores)
                index[{id, rec.node, rec.restriction}] = BoxAttention(rec.scores);
    }
    if (index.empty())
        throw ValidationError(path + ": no box-attention records found");
    return index;
}

int cmd_eval_visual(const std::string& inputs_path, const std::string& annotations_path,
                    const std::string& scenes_path, const std::string& out_path,
                    bool with_upper_bound, CommonFlags& flags) {
    flags.resolve();
    flags.config.with_upper_bound = with_upper_bound;
    auto annotations = read_visual_annotations(annotations_path);
    auto scenes = read_scenes(scenes_path);
    auto index = load_attention_index(inputs_path);

    std::vector<InstanceScore> instances;
    for (const auto& annotation : annotations) {
        auto scene_it = scenes.find(annotation.example_id);
        if (scene_it == scenes.end())
            throw ValidationError("annotation references unknown example '" +
                                  annotation.example_id + "'");
        ImageRestriction ctx = annotation.image == ImageSide::Left ? ImageRestriction::Left
                                                                   : ImageRestriction::Right;
        auto found = index.find({annotation.example_id, annotation.node, ctx});
        if (found == index.end())
            found = index.find({annotation.example_id, annotation.node, ImageRestriction::Both});
        if (found == index.end())
            throw ValidationError("annotation for example '" + annotation.example_id +
                                  "' node " + std::to_string(annotation.node) +
                                  " has no module output");
        instances.push_back(InstanceScore{
            annotation.example_id, annotation.module, annotation.image,
            instance_counts(annotation, found->second, scene_it->second, flags.config.metric)});
    }
    FaithfulnessReport report = aggregate(instances, flags.config.metric.scheme);
    std::optional<FaithfulnessReport> upper;
    if (with_upper_bound) upper = upper_bound(annotations, scenes, flags.config.metric);

    if (!out_path.empty()) {
        auto out = open_output(out_path);
        out << report_to_json(report, upper, flags.config).dump(2) << "\n";
    }
    std::cout << report_table(report, upper);
    return 0;
}

// ---- eval-text ------------------------------------------------------------

int cmd_eval_text(const std::string& annotations_path, const std::string& outputs_path,
                  const std::string& out_path, CommonFlags& flags) {
    flags.resolve();
    auto annotations = read_text_annotations(annotations_path);
    if (!outputs_path.empty()) {
        auto dists = read_token_dists(outputs_path);
        for (auto& annotation : annotations) {
            auto it = dists.find({annotation.example_id, annotation.node});
            if (it != dists.end()) annotation.token_dist = it->second;
        }
    }
    for (const auto& annotation : annotations)
        if (annotation.token_dist.probs.empty())
            throw ValidationError("example '" + annotation.example_id + "' node " +
                                  std::to_string(annotation.node) +
                                  " has no token distribution");
    TextReport report = text_aggregate(annotations);
    if (!out_path.empty()) {
        auto out = open_output(out_path);
        out << text_report_to_json(report, flags.config).dump(2) << "\n";
    }
    std::cout << text_report_table(report);
    return 0;
}

// ---- perm-test ------------------------------------------------------------

std::map<std::string, double> read_per_example_scores(const std::string& path,
                                                      const std::string& metric) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::string content((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
    std::map<std::string, double> scores;
    auto insert = [&](const json& rec) {
        if (!rec.contains("id")) throw ValidationError(path + ": record is missing 'id'");
        if (!rec.contains(metric))
            throw ValidationError(path + ": record is missing metric '" + metric + "'");
        scores[rec["id"].get<std::string>()] = rec[metric].get<double>();
    };
    json doc = json::parse(content, nullptr, false);
    if (!doc.is_discarded() && doc.is_object() && doc.contains("per_example")) {
        for (const auto& rec : doc["per_example"]) insert(rec);
    } else {
        std::istringstream lines(content);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(lines, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            json rec = json::parse(line, nullptr, false);
            if (rec.is_discarded())
                throw ValidationError(path + ":" + std::to_string(lineno) + ": invalid JSON");
            insert(rec);
        }
    }
    if (scores.empty()) throw ValidationError(path + ": no per-example scores found");
    return scores;
}

int cmd_perm_test(const std::string& path_a, const std::string& path_b,
                  const std::string& metric, const std::string& out_path, CommonFlags& flags) {
    flags.resolve();
    auto scores_a = read_per_example_scores(path_a, metric);
    auto scores_b = read_per_example_scores(path_b, metric);
    if (scores_a.size() != scores_b.size())
        throw ValidationError("score files cover different example sets");
    std::vector<double> a, b;
    for (const auto& [id, value] : scores_a) {
        auto it = scores_b.find(id);
        if (it == scores_b.end())
            throw ValidationError("example '" + id + "' is missing from " + path_b);
        a.push_back(value);
        b.push_back(it->second);
    }
    PermutationResult result = permutation_test(a, b, flags.config.trials, flags.config.seed,
                                                flags.config.test_side);
    json record = permutation_to_json(result, metric, static_cast<long>(a.size()),
                                      flags.config.test_side);
    if (!out_path.empty()) {
        auto out = open_output(out_path);
        out << record.dump(2) << "\n";
    }
    std::cout << "p_value=" << result.p_value << " delta_original=" << result.delta_original
              << " trials=" << result.trials << " seed=" << result.seed << "\n";
    return 0;
}

// ---- synth ----------------------------------------------------------------

int cmd_synth(const std::string& spec_path, const std::string& programs_path,
              const std::string& out_dir, double noise, CommonFlags& flags) {
    flags.resolve();
    SceneSpec spec = spec_path.empty() ? SceneSpec{} : read_scene_spec(spec_path);
    auto programs = read_programs(programs_path);
    SignatureTable table = SignatureTable::visual();

    // Buffer everything so a failing example leaves no partial files behind.
    std::ostringstream scenes_out, groundings_out, annotations_out, expected_out;

    std::vector<std::pair<std::string, std::string>> sorted_programs;
    for (const auto& rec : programs) sorted_programs.emplace_back(rec.id, rec.program);
    std::sort(sorted_programs.begin(), sorted_programs.end());

    for (std::size_t i = 0; i < sorted_programs.size(); ++i) {
        const auto& [id, text] = sorted_programs[i];
        Program program = parse_typed(text, table);
        SyntheticExample example = generate_example(
            id, program, spec, hash_u64(flags.config.seed, i), flags.config.exec, noise);
        write_scene(scenes_out, example.scene.scene);
        GroundingFileEntry entry{example.groundings, example.counts};
        write_groundings(groundings_out, id, entry);
        write_visual_annotations(annotations_out, example.annotations);
        write_expected(expected_out, id, example.expected);
    }

    std::filesystem::create_directories(out_dir);
    open_output(out_dir + "/scenes.jsonl") << scenes_out.str();
    open_output(out_dir + "/groundings.jsonl") << groundings_out.str();
    open_output(out_dir + "/annotations.jsonl") << annotations_out.str();
    open_output(out_dir + "/expected.jsonl") << expected_out.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic executor and faithfulness evaluator for module-network "
                 "programs over two-image scenes"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string programs_path, scenes_path, groundings_path, annotations_path;
    std::string inputs_path, outputs_path, out_path, out_dir, signatures_path;
    std::string path_a, path_b, metric = "f1", spec_path;
    bool with_upper_bound = false;
    double noise = 0.0;

    auto* exec = app.add_subcommand("exec", "Execute programs over scenes and groundings");
    exec->add_option("--programs", programs_path)->required();
    exec->add_option("--scenes", scenes_path)->required();
    exec->add_option("--groundings", groundings_path)->required();
    exec->add_option("--out", out_path)->required();
    exec->add_option("--signatures", signatures_path, "Module signature config (JSON)");
    add_common_flags(exec, flags);

    auto* eval_visual =
        app.add_subcommand("eval-visual", "Score box-attention outputs against gold boxes");
    eval_visual->add_option("--inputs", inputs_path, "Trace or groundings file")->required();
    eval_visual->add_option("--annotations", annotations_path)->required();
    eval_visual->add_option("--scenes", scenes_path)->required();
    eval_visual->add_option("--out", out_path, "Report JSON path");
    eval_visual->add_flag("--upper-bound", with_upper_bound,
                          "Include the maximal score conditioned on the proposals");
    add_common_flags(eval_visual, flags);

    auto* eval_text =
        app.add_subcommand("eval-text", "Score token distributions against gold spans");
    eval_text->add_option("--annotations", annotations_path)->required();
    eval_text->add_option("--module-outputs", outputs_path,
                          "Optional token distributions keyed by (id, node)");
    eval_text->add_option("--out", out_path, "Report JSON path");
    add_common_flags(eval_text, flags);

    auto* perm = app.add_subcommand("perm-test", "Paired permutation significance test");
    perm->add_option("--report-a", path_a)->required();
    perm->add_option("--report-b", path_b)->required();
    perm->add_option("--metric", metric, "Per-example field to compare")
        ->capture_default_str();
    perm->add_option("--out", out_path, "Result JSON path");
    perm->add_flag("--one-sided", flags.one_sided, "One-sided extremity instead of |delta|");
    add_common_flags(perm, flags);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic benchmark bundle");
    synth->add_option("--spec", spec_path, "Scene spec JSON (defaults apply when omitted)");
    synth->add_option("--programs", programs_path)->required();
    synth->add_option("--out-dir", out_dir)->required();
    synth->add_option("--noise", noise, "Grounding noise in [0,1]")->capture_default_str();
    add_common_flags(synth, flags);

    try {
        app.parse(argc, argv);
        if (app.got_subcommand(exec))
            return cmd_exec(programs_path, scenes_path, groundings_path, out_path,
                            signatures_path, flags);
        if (app.got_subcommand(eval_visual))
            return cmd_eval_visual(inputs_path, annotations_path, scenes_path, out_path,
                                   with_upper_bound, flags);
        if (app.got_subcommand(eval_text))
            return cmd_eval_text(annotations_path, outputs_path, out_path, flags);
        if (app.got_subcommand(perm))
            return cmd_perm_test(path_a, path_b, metric, out_path, flags);
        if (app.got_subcommand(synth))
            return cmd_synth(spec_path, programs_path, out_dir, noise, flags);
        return 3;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}
