#include "nmneval/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace nmneval {

using nlohmann::json;

void RunConfig::validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(metric.iou_threshold)) throw ValidationError("iou threshold outside [0,1]");
    if (!in_unit(metric.prob_threshold)) throw ValidationError("probability threshold outside [0,1]");
    if (metric.neg_iou_threshold && !in_unit(*metric.neg_iou_threshold))
        throw ValidationError("negative iou threshold outside [0,1]");
    if (exec.max_count < 1) throw ValidationError("max count must be at least 1");
    if (exec.sigma_sq < 0) throw ValidationError("sigma_sq must be nonnegative");
    if (!in_unit(exec.cluster_iou)) throw ValidationError("cluster iou outside [0,1]");
    if (trials < 1) throw ValidationError("trials must be at least 1");
}

namespace {

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file: " + path);
    return in;
}

json parse_line(const std::string& line, const std::string& path, std::size_t lineno) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw ValidationError(path + ":" + std::to_string(lineno) + ": invalid JSON: " +
                              e.what());
    }
}

/// Apply `fn` to every non-empty line, decorating errors with file:line.
template <typename Fn>
void for_each_record(const std::string& path, Fn fn) {
    std::ifstream in = open_input(path);
    std::string line;
    std::size_t lineno = 0;
    bool any = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        any = true;
        json record = parse_line(line, path, lineno);
        try {
            fn(record);
        } catch (const ValidationError& e) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!any) throw ValidationError(path + ": file contains no records");
}

const json& require(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError(std::string("missing field '") + key + "'");
    return *it;
}

std::string require_string(const json& j, const char* key) {
    const json& v = require(j, key);
    if (!v.is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

NodeId require_node(const json& j) {
    const json& v = require(j, "node");
    if (!v.is_number_unsigned()) throw ValidationError("field 'node' must be a nonnegative integer");
    return v.get<NodeId>();
}

std::vector<double> require_doubles(const json& j, const char* key) {
    const json& v = require(j, key);
    if (!v.is_array()) throw ValidationError(std::string("field '") + key + "' must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& x : v) {
        if (!x.is_number()) throw ValidationError(std::string("field '") + key +
                                                  "' must contain only numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

ImageSide image_side_from(const json& v) {
    std::string s = v.get<std::string>();
    if (s == "left") return ImageSide::Left;
    if (s == "right") return ImageSide::Right;
    throw ValidationError("image must be 'left' or 'right', got '" + s + "'");
}

ImageRestriction restriction_from(const json& j) {
    auto it = j.find("image");
    if (it == j.end() || it->is_null()) return ImageRestriction::Both;
    std::string s = it->get<std::string>();
    if (s == "left") return ImageRestriction::Left;
    if (s == "right") return ImageRestriction::Right;
    if (s == "none") return ImageRestriction::Neither;
    throw ValidationError("image context must be left/right/none, got '" + s + "'");
}

void write_restriction(json& j, ImageRestriction r) {
    switch (r) {
        case ImageRestriction::Both: break;  // omitted
        case ImageRestriction::Left: j["image"] = "left"; break;
        case ImageRestriction::Right: j["image"] = "right"; break;
        case ImageRestriction::Neither: j["image"] = "none"; break;
    }
}

BoundingBox box_from(const json& v, ImageSide side) {
    if (!v.is_array() || v.size() != 4) throw ValidationError("box must be [x1, y1, x2, y2]");
    BoundingBox box{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(),
                    v[3].get<double>(), side};
    box.validate();
    return box;
}

json box_to_json(const BoundingBox& box) {
    return json::array({box.x1, box.y1, box.x2, box.y2});
}

json value_to_json(const Value& value) {
    json j;
    if (const auto* t = std::get_if<TruthProb>(&value)) {
        j["type"] = "truth";
        j["value"] = t->value;
    } else if (const auto* n = std::get_if<NumberValue>(&value)) {
        j["type"] = "number";
        j["mean"] = n->mean;
        j["var"] = n->var;
    } else {
        j["type"] = "box_attention";
        j["probs"] = std::get<BoxAttention>(value).probs;
    }
    return j;
}

Value value_from_json(const json& j) {
    std::string type = require_string(j, "type");
    if (type == "truth") return TruthProb(require(j, "value").get<double>());
    if (type == "number")
        return make_number(require(j, "mean").get<double>(), require(j, "var").get<double>());
    if (type == "box_attention") return BoxAttention(require_doubles(j, "probs"));
    throw ValidationError("unknown value type '" + type + "'");
}

}  // namespace

std::vector<ProgramRecord> read_programs(const std::string& path) {
    std::vector<ProgramRecord> out;
    for_each_record(path, [&](const json& j) {
        ProgramRecord rec;
        rec.id = require_string(j, "id");
        rec.program = require_string(j, "program");
        if (j.contains("utterance")) rec.utterance = require_string(j, "utterance");
        out.push_back(std::move(rec));
    });
    return out;
}

std::map<std::string, Scene> read_scenes(const std::string& path) {
    std::map<std::string, Scene> out;
    for_each_record(path, [&](const json& j) {
        Scene scene;
        scene.id = require_string(j, "id");
        if (out.count(scene.id)) throw ValidationError("duplicate scene id '" + scene.id + "'");
        const json& proposals = require(j, "proposals");
        if (!proposals.is_array()) throw ValidationError("field 'proposals' must be an array");
        std::size_t idx = 0;
        for (const auto& p : proposals) {
            if (require(p, "idx").get<std::size_t>() != idx)
                throw ValidationError("proposal indices must be dense and ascending from 0");
            scene.proposals.push_back(box_from(require(p, "box"), image_side_from(require(p, "image"))));
            ++idx;
        }
        if (scene.proposals.empty())
            throw ValidationError("scene '" + scene.id + "' has no proposals");
        out.emplace(scene.id, std::move(scene));
    });
    return out;
}

std::map<std::string, GroundingFileEntry> read_groundings(const std::string& path) {
    std::map<std::string, GroundingFileEntry> out;
    for_each_record(path, [&](const json& j) {
        std::string id = require_string(j, "id");
        GroundingFileEntry& entry = out[id];
        if (j.contains("number")) {
            const json& n = require(j, "number");
            entry.counts.push_back(CountRecord{
                require_node(j), restriction_from(j),
                make_number(require(n, "mean").get<double>(), require(n, "var").get<double>())});
            return;
        }
        GroundingRecord rec;
        rec.node = require_node(j);
        rec.restriction = restriction_from(j);
        rec.kind = j.contains("kind") ? learned_kind_from_name(require_string(j, "kind"))
                                      : LearnedKind::Find;
        rec.scores = require_doubles(j, "scores");
        for (double s : rec.scores)
            if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("grounding score outside [0,1]");
        entry.scores.push_back(std::move(rec));
    });
    return out;
}

std::vector<VisualAnnotation> read_visual_annotations(const std::string& path) {
    std::vector<VisualAnnotation> out;
    for_each_record(path, [&](const json& j) {
        VisualAnnotation a;
        a.example_id = require_string(j, "id");
        a.node = require_node(j);
        a.module = require_string(j, "module");
        a.image = image_side_from(require(j, "image"));
        const json& boxes = require(j, "boxes");
        if (!boxes.is_array()) throw ValidationError("field 'boxes' must be an array");
        for (const auto& b : boxes) a.boxes.push_back(box_from(b, a.image));
        out.push_back(std::move(a));
    });
    return out;
}

std::vector<TextAnnotation> read_text_annotations(const std::string& path) {
    std::vector<TextAnnotation> out;
    for_each_record(path, [&](const json& j) {
        TextAnnotation a;
        a.example_id = require_string(j, "id");
        a.node = require_node(j);
        a.module = require_string(j, "module");
        if (j.contains("token_dist")) a.token_dist.probs = require_doubles(j, "token_dist");
        const json& spans = require(j, "spans");
        if (!spans.is_array() || spans.empty())
            throw ValidationError("field 'spans' must be a non-empty array");
        for (const auto& s : spans) {
            if (!s.is_array() || s.size() != 2)
                throw ValidationError("each span must be [start, end]");
            int start = s[0].get<int>(), end = s[1].get<int>();
            if (start < 0 || end < start)
                throw ValidationError("span [" + std::to_string(start) + ", " +
                                      std::to_string(end) + "] is malformed");
            a.spans.emplace_back(start, end);
        }
        out.push_back(std::move(a));
    });
    return out;
}

std::vector<TraceRecord> read_trace(const std::string& path) {
    std::vector<TraceRecord> out;
    for_each_record(path, [&](const json& j) {
        TraceRecord rec;
        rec.id = require_string(j, "id");
        rec.node = require_node(j);
        rec.restriction = restriction_from(j);
        if (j.contains("module")) rec.module = require_string(j, "module");
        rec.value = value_from_json(require(j, "value"));
        out.push_back(std::move(rec));
    });
    return out;
}

SceneSpec read_scene_spec(const std::string& path) {
    std::ifstream in = open_input(path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(path + ": invalid JSON: " + e.what());
    }
    SceneSpec spec;
    auto load_num = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    auto load_vocab = [&](const char* key, std::vector<std::string>& field) {
        if (j.contains(key)) field = j[key].get<std::vector<std::string>>();
    };
    load_num("image_width", spec.image_width);
    load_num("image_height", spec.image_height);
    load_num("min_objects_per_image", spec.min_objects_per_image);
    load_num("max_objects_per_image", spec.max_objects_per_image);
    load_vocab("categories", spec.categories);
    load_vocab("attributes", spec.attributes);
    load_vocab("relations", spec.relations);
    load_num("jitter_iou_min", spec.jitter_iou_min);
    load_num("jitter_iou_max", spec.jitter_iou_max);
    load_num("min_proposals_per_object", spec.min_proposals_per_object);
    load_num("max_proposals_per_object", spec.max_proposals_per_object);
    load_num("distractor_proposals", spec.distractor_proposals);
    spec.validate();
    return spec;
}

SignatureTable read_signature_table(const std::string& path) {
    std::ifstream in = open_input(path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(path + ": invalid JSON: " + e.what());
    }
    SignatureTable table;
    if (!j.contains("include_visual") || j["include_visual"].get<bool>())
        table = SignatureTable::visual();
    if (j.contains("modules")) {
        for (const auto& m : j["modules"]) {
            ModuleSignature sig;
            sig.name = require_string(m, "name");
            if (m.contains("args"))
                for (const auto& a : m["args"])
                    sig.arg_types.push_back(value_type_from_name(a.get<std::string>()));
            sig.takes_utterance_attention =
                m.contains("utterance") && m["utterance"].get<bool>();
            sig.return_type = value_type_from_name(require_string(m, "returns"));
            table.add(std::move(sig));
        }
    }
    if (j.contains("aliases"))
        for (const auto& a : j["aliases"])
            table.add_alias(require_string(a, "alias"), require_string(a, "target"));
    return table;
}

std::map<std::pair<std::string, NodeId>, TokenDist> read_token_dists(const std::string& path) {
    std::map<std::pair<std::string, NodeId>, TokenDist> out;
    for_each_record(path, [&](const json& j) {
        std::string id = require_string(j, "id");
        NodeId node = require_node(j);
        out[{id, node}] = TokenDist{require_doubles(j, "scores")};
    });
    return out;
}

void write_trace(std::ostream& out, const std::vector<TraceRecord>& records) {
    for (const auto& rec : records) {
        json j;
        j["id"] = rec.id;
        j["node"] = rec.node;
        write_restriction(j, rec.restriction);
        if (!rec.module.empty()) j["module"] = rec.module;
        j["value"] = value_to_json(rec.value);
        out << j.dump() << "\n";
    }
}

void write_groundings(std::ostream& out, const std::string& id,
                      const GroundingFileEntry& entry) {
    for (const auto& rec : entry.scores) {
        json j;
        j["id"] = id;
        j["node"] = rec.node;
        j["kind"] = to_string(rec.kind);
        write_restriction(j, rec.restriction);
        j["scores"] = rec.scores;
        out << j.dump() << "\n";
    }
    for (const auto& rec : entry.counts) {
        json j;
        j["id"] = id;
        j["node"] = rec.node;
        write_restriction(j, rec.restriction);
        j["number"] = {{"mean", rec.number.mean}, {"var", rec.number.var}};
        out << j.dump() << "\n";
    }
}

void write_scene(std::ostream& out, const Scene& scene) {
    json j;
    j["id"] = scene.id;
    json proposals = json::array();
    for (std::size_t i = 0; i < scene.proposals.size(); ++i) {
        const auto& box = scene.proposals[i];
        proposals.push_back({{"idx", i},
                             {"image", to_string(box.image)},
                             {"box", box_to_json(box)}});
    }
    j["proposals"] = std::move(proposals);
    out << j.dump() << "\n";
}

void write_visual_annotations(std::ostream& out,
                              const std::vector<VisualAnnotation>& annotations) {
    for (const auto& a : annotations) {
        json j;
        j["id"] = a.example_id;
        j["node"] = a.node;
        j["module"] = a.module;
        j["image"] = to_string(a.image);
        json boxes = json::array();
        for (const auto& b : a.boxes) boxes.push_back(box_to_json(b));
        j["boxes"] = std::move(boxes);
        out << j.dump() << "\n";
    }
}

void write_expected(std::ostream& out, const std::string& id, const GoldValue& expected) {
    json j;
    j["id"] = id;
    if (std::holds_alternative<bool>(expected.value)) {
        j["type"] = "bool";
        j["value"] = expected.as_bool();
    } else if (std::holds_alternative<long>(expected.value)) {
        j["type"] = "number";
        j["value"] = expected.as_number();
    } else {
        throw ValidationError("expected denotation must be a boolean or a number");
    }
    out << j.dump() << "\n";
}

namespace {

json run_config_meta(const RunConfig& config) {
    json meta;
    meta["iou_threshold"] = config.metric.iou_threshold;
    meta["prob_threshold"] = config.metric.prob_threshold;
    if (config.metric.neg_iou_threshold)
        meta["neg_iou_threshold"] = *config.metric.neg_iou_threshold;
    meta["mid_band"] = config.metric.mid_band == MidBandPolicy::Exclude ? "exclude" : "penalize";
    meta["aggregation"] = to_string(config.metric.scheme);
    meta["max_count"] = config.exec.max_count;
    meta["sigma_sq"] = config.exec.sigma_sq;
    meta["count_strategy"] = to_string(config.exec.count_strategy);
    meta["cluster_iou"] = config.exec.cluster_iou;
    meta["trials"] = config.trials;
    meta["seed"] = config.seed;
    return meta;
}

json module_score_json(const ModuleScore& s) {
    return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
            {"examples", s.examples}};
}

json report_body(const FaithfulnessReport& report) {
    json j;
    j["scheme"] = to_string(report.scheme);
    j["overall"] = module_score_json(report.overall);
    json modules;
    for (const auto& [name, score] : report.modules) modules[name] = module_score_json(score);
    j["modules"] = std::move(modules);
    return j;
}

}  // namespace

json report_to_json(const FaithfulnessReport& report,
                    const std::optional<FaithfulnessReport>& upper, const RunConfig& config) {
    json j = report_body(report);
    j["meta"] = run_config_meta(config);
    if (upper) j["upper_bound"] = report_body(*upper);
    json per_example = json::array();
    for (const auto& [id, s] : report.per_example)
        per_example.push_back(
            {{"id", id}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}});
    j["per_example"] = std::move(per_example);
    return j;
}

json text_report_to_json(const TextReport& report, const RunConfig& config) {
    json j;
    j["meta"] = run_config_meta(config);
    j["overall"] = {{"cross_entropy", report.overall.cross_entropy},
                    {"instances", report.overall.instances}};
    json modules;
    for (const auto& [name, score] : report.modules)
        modules[name] = {{"cross_entropy", score.cross_entropy}, {"instances", score.instances}};
    j["modules"] = std::move(modules);
    json per_example = json::array();
    for (const auto& [id, ce] : report.per_example)
        per_example.push_back({{"id", id}, {"cross_entropy", ce}});
    j["per_example"] = std::move(per_example);
    return j;
}

json permutation_to_json(const PermutationResult& result, const std::string& metric,
                         long examples, TestSide side) {
    json j;
    j["p_value"] = result.p_value;
    j["delta_original"] = result.delta_original;
    j["trials"] = result.trials;
    j["seed"] = result.seed;
    j["examples"] = examples;
    j["metric"] = metric;
    j["sided"] = side == TestSide::TwoSided ? "two" : "one";
    return j;
}

namespace {

std::string fmt(double v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(3) << v;
    return out.str();
}

void table_row(std::ostringstream& out, const std::string& label, const ModuleScore& overall,
               const std::vector<std::string>& modules,
               const std::map<std::string, ModuleScore>& scores) {
    out << std::left << std::setw(14) << label << std::right;
    out << std::setw(8) << fmt(overall.precision) << std::setw(8) << fmt(overall.recall)
        << std::setw(8) << fmt(overall.f1) << "  |";
    for (const auto& name : modules) {
        auto it = scores.find(name);
        out << std::setw(static_cast<int>(std::max<std::size_t>(name.size() + 2, 8)))
            << (it == scores.end() ? std::string("-") : fmt(it->second.f1));
    }
    out << "\n";
}

}  // namespace

std::string report_table(const FaithfulnessReport& report,
                         const std::optional<FaithfulnessReport>& upper) {
    std::vector<std::string> modules;
    for (const auto& [name, score] : report.modules) modules.push_back(name);

    std::ostringstream out;
    out << std::left << std::setw(14) << ("[" + std::string(to_string(report.scheme)) + "]")
        << std::right << std::setw(8) << "Prec." << std::setw(8) << "Rec." << std::setw(8)
        << "F1" << "  |";
    for (const auto& name : modules)
        out << std::setw(static_cast<int>(std::max<std::size_t>(name.size() + 2, 8))) << name;
    out << "\n";
    table_row(out, "measured", report.overall, modules, report.modules);
    if (upper) table_row(out, "upper-bound", upper->overall, modules, upper->modules);
    return out.str();
}

std::string text_report_table(const TextReport& report) {
    std::ostringstream out;
    out << std::left << std::setw(14) << "module" << std::right << std::setw(16)
        << "cross-entropy" << std::setw(12) << "instances" << "\n";
    auto row = [&](const std::string& name, const TextModuleScore& s) {
        out << std::left << std::setw(14) << name << std::right << std::setw(16)
            << fmt(s.cross_entropy) << std::setw(12) << s.instances << "\n";
    };
    row("overall", report.overall);
    for (const auto& [name, score] : report.modules) row(name, score);
    return out.str();
}

FileProvider::FileProvider(std::string example_id, const GroundingFileEntry& entry)
    : example_id_(std::move(example_id)), entry_(entry) {}

std::vector<double> FileProvider::scores(const GroundingQuery& query) {
    const GroundingRecord* exact = nullptr;
    const GroundingRecord* unrestricted = nullptr;
    const GroundingRecord* sole = nullptr;
    std::size_t node_records = 0;
    for (const auto& rec : entry_.scores) {
        if (rec.node != query.node) continue;
        ++node_records;
        sole = &rec;
        if (rec.kind != query.kind) continue;
        if (rec.restriction == query.restriction) exact = &rec;
        if (rec.restriction == ImageRestriction::Both) unrestricted = &rec;
    }
    if (exact) return exact->scores;
    if (unrestricted) return unrestricted->scores;
    // Hand-written files may carry a single record per node without a kind
    // tag; accept it when unambiguous.
    if (node_records == 1) return sole->scores;
    throw ValidationError("example '" + example_id_ + "': no grounding for node " +
                          std::to_string(query.node) + " (" + to_string(query.kind) +
                          ", context " + to_string(query.restriction) + ")");
}

NumberValue FileProvider::count(const BoxAttention&, NodeId node, ImageRestriction restriction) {
    const CountRecord* unrestricted = nullptr;
    for (const auto& rec : entry_.counts) {
        if (rec.node != node) continue;
        if (rec.restriction == restriction) return rec.number;
        if (rec.restriction == ImageRestriction::Both) unrestricted = &rec;
    }
    if (unrestricted) return unrestricted->number;
    throw ValidationError("example '" + example_id_ + "': no count grounding for node " +
                          std::to_string(node) + " (context " + to_string(restriction) + ")");
}

}  // namespace nmneval
