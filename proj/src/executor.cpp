#include "nmneval/executor.hpp"

#include <algorithm>
#include <numeric>

namespace nmneval {

const char* to_string(LearnedKind k) {
    switch (k) {
        case LearnedKind::Find: return "find";
        case LearnedKind::Filter: return "filter";
        case LearnedKind::WithRelation: return "with-relation";
        case LearnedKind::Project: return "project";
    }
    return "?";
}

LearnedKind learned_kind_from_name(const std::string& name) {
    if (name == "find") return LearnedKind::Find;
    if (name == "filter") return LearnedKind::Filter;
    if (name == "with-relation") return LearnedKind::WithRelation;
    if (name == "project") return LearnedKind::Project;
    throw ValidationError("not a learned module: " + name);
}

ImageRestriction compose(ImageRestriction outer, ImageRestriction inner) {
    if (outer == ImageRestriction::Both) return inner;
    if (inner == ImageRestriction::Both) return outer;
    if (outer == inner) return outer;
    return ImageRestriction::Neither;
}

bool allows(ImageRestriction r, ImageSide side) {
    switch (r) {
        case ImageRestriction::Both: return true;
        case ImageRestriction::Left: return side == ImageSide::Left;
        case ImageRestriction::Right: return side == ImageSide::Right;
        case ImageRestriction::Neither: return false;
    }
    return false;
}

std::string to_string(ImageRestriction r) {
    switch (r) {
        case ImageRestriction::Both: return "both";
        case ImageRestriction::Left: return "left";
        case ImageRestriction::Right: return "right";
        case ImageRestriction::Neither: return "neither";
    }
    return "?";
}

NumberValue GroundingProvider::count(const BoxAttention&, NodeId node, ImageRestriction) {
    throw ValidationError("grounding provider supplies no count for node " + std::to_string(node));
}

const char* to_string(CountStrategy s) {
    switch (s) {
        case CountStrategy::Sum: return "sum";
        case CountStrategy::Overlap: return "overlap";
        case CountStrategy::Provider: return "provider";
    }
    return "?";
}

CountStrategy count_strategy_from_name(const std::string& name) {
    if (name == "sum") return CountStrategy::Sum;
    if (name == "overlap") return CountStrategy::Overlap;
    if (name == "provider") return CountStrategy::Provider;
    throw ValidationError("unknown count strategy: " + name);
}

const Value* ExecutionTrace::find(NodeId node, ImageRestriction r) const {
    for (const auto& e : entries)
        if (e.node == node && e.restriction == r) return &e.value;
    return nullptr;
}

const Value& ExecutionTrace::at(NodeId node, ImageRestriction r) const {
    const Value* v = find(node, r);
    if (!v)
        throw ValidationError("trace has no value for node " + std::to_string(node) + " (" +
                              to_string(r) + ")");
    return *v;
}

BoxAttention compose_learned(LearnedKind kind, const std::vector<BoxAttention>& inputs,
                             const std::vector<double>& scores) {
    auto expect_inputs = [&](std::size_t n) {
        if (inputs.size() != n)
            throw ValidationError(std::string("compose_learned(") + to_string(kind) +
                                  ") expects " + std::to_string(n) + " input attention(s)");
        for (const auto& p : inputs)
            if (p.size() != scores.size())
                throw ValidationError("attention/score length mismatch in learned module");
    };
    auto max_of = [](const BoxAttention& p) {
        return p.probs.empty() ? 0.0 : *std::max_element(p.probs.begin(), p.probs.end());
    };

    BoxAttention out;
    out.probs.resize(scores.size());
    switch (kind) {
        case LearnedKind::Find:
            expect_inputs(0);
            out.probs = scores;
            break;
        case LearnedKind::Filter:
            expect_inputs(1);
            for (std::size_t i = 0; i < scores.size(); ++i)
                out.probs[i] = inputs[0].probs[i] * scores[i];
            break;
        case LearnedKind::WithRelation: {
            expect_inputs(2);
            double scale = max_of(inputs[1]);
            for (std::size_t i = 0; i < scores.size(); ++i)
                out.probs[i] = scale * inputs[0].probs[i] * scores[i];
            break;
        }
        case LearnedKind::Project: {
            // inputs = {p, find(q)}
            expect_inputs(2);
            double scale = max_of(inputs[0]);
            for (std::size_t i = 0; i < scores.size(); ++i)
                out.probs[i] = scale * inputs[1].probs[i] * scores[i];
            break;
        }
    }
    return out;
}

namespace {

void check_lengths(const BoxAttention& a, const BoxAttention& b, const char* op) {
    if (a.size() != b.size())
        throw ValidationError(std::string(op) + ": attention length mismatch");
}

}  // namespace

BoxAttention intersect(const BoxAttention& p1, const BoxAttention& p2) {
    check_lengths(p1, p2, "intersect");
    BoxAttention out;
    out.probs.resize(p1.size());
    for (std::size_t i = 0; i < p1.size(); ++i) out.probs[i] = p1.probs[i] * p2.probs[i];
    return out;
}

BoxAttention discard(const BoxAttention& p1, const BoxAttention& p2) {
    check_lengths(p1, p2, "discard");
    BoxAttention out;
    out.probs.resize(p1.size());
    for (std::size_t i = 0; i < p1.size(); ++i)
        out.probs[i] = std::max(p1.probs[i] - p2.probs[i], 0.0);
    return out;
}

BoxAttention restrict_to_image(const BoxAttention& p, ImageSide side, const Scene& scene) {
    p.validate(scene.size());
    BoxAttention out = p;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (scene.proposals[i].image != side) out.probs[i] = 0.0;
    return out;
}

NumberValue count_sum(const BoxAttention& p, double sigma_sq) {
    return NumberValue{stable_sum(p.probs), sigma_sq};
}

NumberValue count_overlap_aware(const BoxAttention& p, const Scene& scene, double cluster_iou,
                                double sigma_sq) {
    p.validate(scene.size());
    const std::size_t n = scene.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto root_of = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (iou(scene.proposals[i], scene.proposals[j]) > cluster_iou)
                parent[root_of(i)] = root_of(j);

    // One contribution per single-link cluster: its maximum probability.
    std::vector<double> cluster_max(n, -1.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = root_of(i);
        cluster_max[r] = std::max(cluster_max[r], p.probs[i]);
    }
    std::vector<double> contributions;
    for (std::size_t i = 0; i < n; ++i)
        if (cluster_max[i] >= 0.0) contributions.push_back(cluster_max[i]);
    return NumberValue{stable_sum(contributions), sigma_sq};
}

namespace {

std::string canonical_module(const std::string& name) {
    return name == "relocate" ? "project" : name;
}

class Evaluator {
  public:
    Evaluator(const Program& program, const Scene& scene, GroundingProvider& provider,
              const ExecConfig& config)
        : program_(program), scene_(scene), provider_(provider), config_(config) {}

    ExecutionTrace run() {
        Value denotation = eval(program_.root(), ImageRestriction::Both);
        trace_.denotation = denotation;
        return std::move(trace_);
    }

  private:
    Value eval(NodeId id, ImageRestriction r) {
        // Nested macros can request the same (node, restriction) twice;
        // evaluation is pure, so reuse the recorded value.
        if (const Value* seen = trace_.find(id, r)) return *seen;

        const ProgramNode& node = program_.node(id);
        const std::string module = canonical_module(node.module);
        Value value;

        if (is_learned_module(module)) {
            value = eval_learned(id, node, module, r);
        } else if (module == "intersect" || module == "discard") {
            auto p1 = std::get<BoxAttention>(eval(node.children[0], r));
            auto p2 = std::get<BoxAttention>(eval(node.children[1], r));
            value = module == "intersect" ? intersect(p1, p2) : discard(p1, p2);
        } else if (module == "in-left-image" || module == "in-right-image") {
            auto p = std::get<BoxAttention>(eval(node.children[0], r));
            ImageSide side = module == "in-left-image" ? ImageSide::Left : ImageSide::Right;
            value = restrict_to_image(p, side, scene_);
        } else if (module == "count") {
            auto p = std::get<BoxAttention>(eval(node.children[0], r));
            value = run_count(p, id, r);
        } else if (module == "exist") {
            auto p = std::get<BoxAttention>(eval(node.children[0], r));
            NumberValue c = run_count(p, id, r);
            value = compare(CompareKind::GreaterEqual, c, NumberValue{1.0, 0.0},
                            config_.max_count);
        } else if (module == "equal" || module == "less" || module == "greater" ||
                   module == "less-equal" || module == "greater-equal") {
            auto a = std::get<NumberValue>(eval(node.children[0], r));
            auto b = std::get<NumberValue>(eval(node.children[1], r));
            value = compare(compare_kind_from_name(module), a, b, config_.max_count);
        } else if (module == "and" || module == "or") {
            auto a = std::get<TruthProb>(eval(node.children[0], r));
            auto b = std::get<TruthProb>(eval(node.children[1], r));
            value = bool_combine(module == "and" ? BoolKind::And : BoolKind::Or, a, b);
        } else if (module == "sum" || module == "difference" || module == "division") {
            auto a = std::get<NumberValue>(eval(node.children[0], r));
            auto b = std::get<NumberValue>(eval(node.children[1], r));
            GaussianArithKind kind = module == "sum" ? GaussianArithKind::Sum
                                     : module == "difference" ? GaussianArithKind::Difference
                                                              : GaussianArithKind::Division;
            value = gaussian_arith(kind, a, b);
        } else if (is_macro_module(module)) {
            value = eval_macro(node, module, r);
        } else {
            throw ValidationError("executor has no implementation for module '" + node.module +
                                  "'");
        }

        trace_.entries.push_back(TraceEntry{id, r, value});
        return value;
    }

    Value eval_learned(NodeId id, const ProgramNode& node, const std::string& module,
                       ImageRestriction r) {
        LearnedKind kind = learned_kind_from_name(module);
        std::vector<BoxAttention> inputs;
        for (NodeId child : node.children)
            inputs.push_back(std::get<BoxAttention>(eval(child, r)));

        std::string utterance = node.utterance ? node.utterance->text : "";
        if (kind == LearnedKind::Project) {
            // project = max(p) * find(q) ⊙ score: the find factor is its own
            // provider call on the same node.
            GroundingQuery find_query{LearnedKind::Find, utterance, {}, id, r};
            inputs.push_back(BoxAttention(checked_scores(provider_.scores(find_query), id)));
        }
        GroundingQuery query{kind, utterance, inputs, id, r};
        std::vector<double> scores = checked_scores(provider_.scores(query), id);
        BoxAttention out = compose_learned(kind, inputs, scores);
        return mask(out, r);
    }

    Value eval_macro(const ProgramNode& node, const std::string& module, ImageRestriction r) {
        ImageRestriction left = compose(r, ImageRestriction::Left);
        ImageRestriction right = compose(r, ImageRestriction::Right);
        if (module == "in-at-least-one-image") {
            auto l = std::get<TruthProb>(eval(node.children[0], left));
            auto rr = std::get<TruthProb>(eval(node.children[0], right));
            return bool_combine(BoolKind::Or, l, rr);
        }
        if (module == "in-each-image") {
            auto l = std::get<TruthProb>(eval(node.children[0], left));
            auto rr = std::get<TruthProb>(eval(node.children[0], right));
            return bool_combine(BoolKind::And, l, rr);
        }
        // in-one-other-image: p1 on one image and p2 on the other, either way.
        auto p1_left = std::get<TruthProb>(eval(node.children[0], left));
        auto p1_right = std::get<TruthProb>(eval(node.children[0], right));
        auto p2_left = std::get<TruthProb>(eval(node.children[1], left));
        auto p2_right = std::get<TruthProb>(eval(node.children[1], right));
        return bool_combine(BoolKind::Or, bool_combine(BoolKind::And, p1_left, p2_right),
                            bool_combine(BoolKind::And, p1_right, p2_left));
    }

    NumberValue run_count(const BoxAttention& p, NodeId node, ImageRestriction r) {
        switch (config_.count_strategy) {
            case CountStrategy::Sum: return count_sum(p, config_.sigma_sq);
            case CountStrategy::Overlap:
                return count_overlap_aware(p, scene_, config_.cluster_iou, config_.sigma_sq);
            case CountStrategy::Provider: {
                NumberValue n = provider_.count(p, node, r);
                return make_number(n.mean, n.var);
            }
        }
        throw std::logic_error("unreachable count strategy");
    }

    std::vector<double> checked_scores(std::vector<double> scores, NodeId node) const {
        if (scores.size() != scene_.size())
            throw ValidationError("provider returned " + std::to_string(scores.size()) +
                                  " scores for node " + std::to_string(node) + "; scene has " +
                                  std::to_string(scene_.size()) + " proposals");
        for (double s : scores)
            if (!(s >= 0.0 && s <= 1.0))
                throw ValidationError("provider returned score outside [0,1] for node " +
                                      std::to_string(node));
        return scores;
    }

    // Learned-module boundary masking keeps macro execution consistent with
    // the full proposal indexing the provider sees.
    BoxAttention mask(BoxAttention p, ImageRestriction r) const {
        if (r == ImageRestriction::Both) return p;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (!allows(r, scene_.proposals[i].image)) p.probs[i] = 0.0;
        return p;
    }

    const Program& program_;
    const Scene& scene_;
    GroundingProvider& provider_;
    const ExecConfig& config_;
    ExecutionTrace trace_;
};

}  // namespace

ExecutionTrace execute(const Program& program, const Scene& scene, GroundingProvider& provider,
                       const ExecConfig& config) {
    if (!program.typechecked())
        throw ValidationError("execute requires a typechecked program");
    for (const auto& box : scene.proposals) box.validate();
    return Evaluator(program, scene, provider, config).run();
}

TruthProb exist(const BoxAttention& p, const Scene& scene, GroundingProvider& provider,
                const ExecConfig& config, NodeId node, ImageRestriction restriction) {
    NumberValue c;
    switch (config.count_strategy) {
        case CountStrategy::Sum: c = count_sum(p, config.sigma_sq); break;
        case CountStrategy::Overlap:
            c = count_overlap_aware(p, scene, config.cluster_iou, config.sigma_sq);
            break;
        case CountStrategy::Provider: c = provider.count(p, node, restriction); break;
    }
    return compare(CompareKind::GreaterEqual, c, NumberValue{1.0, 0.0}, config.max_count);
}

}  // namespace nmneval
