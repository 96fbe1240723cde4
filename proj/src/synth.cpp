#include "nmneval/synth.hpp"

#include <algorithm>
#include <cmath>

#include "nmneval/rng.hpp"

namespace nmneval {

bool GoldWorld::related(std::size_t from, std::size_t to, const std::string& relation) const {
    for (const auto& [name, target] : objects[from].relations)
        if (target == to && name == relation) return true;
    return false;
}

bool GoldWorld::related_any(std::size_t from, std::size_t to) const {
    for (const auto& [name, target] : objects[from].relations)
        if (target == to) return true;
    return false;
}

void SceneSpec::validate() const {
    if (image_width <= 0 || image_height <= 0)
        throw ValidationError("scene spec: image size must be positive");
    if (min_objects_per_image < 0 || max_objects_per_image < min_objects_per_image)
        throw ValidationError("scene spec: bad object count range");
    if (categories.empty()) throw ValidationError("scene spec: empty category vocabulary");
    if (attributes.empty()) throw ValidationError("scene spec: empty attribute vocabulary");
    if (relations.empty()) throw ValidationError("scene spec: empty relation vocabulary");
    if (!(jitter_iou_min > 0.0 && jitter_iou_min <= jitter_iou_max && jitter_iou_max <= 1.0))
        throw ValidationError("scene spec: jitter IOU targets must lie in (0,1]");
    if (min_proposals_per_object < 1 || max_proposals_per_object < min_proposals_per_object)
        throw ValidationError("scene spec: bad proposals-per-object range");
    if (distractor_proposals < 0)
        throw ValidationError("scene spec: negative distractor count");
}

namespace {

bool boxes_intersect(const BoundingBox& a, const BoundingBox& b) {
    return a.image == b.image && a.x1 < b.x2 && b.x1 < a.x2 && a.y1 < b.y2 && b.y1 < a.y2;
}

BoundingBox random_box(Rng& rng, ImageSide side, double width, double height) {
    double w = rng.uniform(0.08, 0.3) * width;
    double h = rng.uniform(0.08, 0.3) * height;
    double x = rng.uniform(0.0, width - w);
    double y = rng.uniform(0.0, height - h);
    return BoundingBox{x, y, x + w, y + h, side};
}

bool in_bounds(const BoundingBox& b, double width, double height) {
    return b.x1 >= 0 && b.y1 >= 0 && b.x2 <= width && b.y2 <= height && b.x1 < b.x2 &&
           b.y1 < b.y2;
}

/// Perturb the corners along a random direction; the scale is solved by
/// bisection so IOU(original, jittered) hits the target.
BoundingBox jitter_box(const BoundingBox& box, double target, Rng& rng, double width,
                       double height) {
    if (target >= 1.0 - 1e-12) return box;
    for (int attempt = 0; attempt < 64; ++attempt) {
        double d[4];
        double mag = 0;
        for (double& v : d) {
            v = rng.uniform(-1.0, 1.0);
            mag = std::max(mag, std::fabs(v));
        }
        if (mag < 0.1) continue;
        const double dx1 = d[0] * box.width(), dy1 = d[1] * box.height();
        const double dx2 = d[2] * box.width(), dy2 = d[3] * box.height();
        auto at = [&](double s) {
            return BoundingBox{box.x1 + s * dx1, box.y1 + s * dy1, box.x2 + s * dx2,
                               box.y2 + s * dy2, box.image};
        };
        auto iou_at = [&](double s) {
            BoundingBox b = at(s);
            return b.x1 < b.x2 && b.y1 < b.y2 ? iou(box, b) : 0.0;
        };

        double hi = 0.05;
        while (iou_at(hi) > target && hi < 8.0) hi *= 2.0;
        if (iou_at(hi) > target) continue;
        double lo = 0.0;
        for (int i = 0; i < 80; ++i) {
            double mid = 0.5 * (lo + hi);
            (iou_at(mid) > target ? lo : hi) = mid;
        }
        BoundingBox result = at(0.5 * (lo + hi));
        if (std::fabs(iou(box, result) - target) > 1e-6) continue;
        if (!in_bounds(result, width, height)) continue;
        return result;
    }
    throw ValidationError("scene spec unsatisfiable: cannot jitter a box to the IOU target");
}

}  // namespace

SyntheticScene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    SyntheticScene out;
    out.world.image_width = spec.image_width;
    out.world.image_height = spec.image_height;

    // Gold boxes never overlap within an image, so a proposal can exceed the
    // 0.5 alignment threshold with at most one object.
    for (ImageSide side : {ImageSide::Left, ImageSide::Right}) {
        int count = static_cast<int>(
            rng.uniform_int(spec.min_objects_per_image, spec.max_objects_per_image));
        std::vector<std::size_t> placed;
        for (int i = 0; i < count; ++i) {
            BoundingBox box;
            bool ok = false;
            for (int attempt = 0; attempt < 500 && !ok; ++attempt) {
                box = random_box(rng, side, spec.image_width, spec.image_height);
                ok = std::none_of(out.world.objects.begin(), out.world.objects.end(),
                                  [&](const SyntheticObject& o) {
                                      return boxes_intersect(o.box, box);
                                  });
            }
            if (!ok)
                throw ValidationError(
                    "scene spec unsatisfiable: cannot place non-overlapping objects");
            SyntheticObject object;
            object.box = box;
            object.category =
                spec.categories[static_cast<std::size_t>(rng.uniform_int(
                    0, static_cast<long>(spec.categories.size()) - 1))];
            for (const auto& attr : spec.attributes)
                if (rng.bernoulli(0.5)) object.attributes.insert(attr);
            placed.push_back(out.world.objects.size());
            out.world.objects.push_back(std::move(object));
        }
        // Relation edges stay within one image.
        for (std::size_t a : placed)
            for (std::size_t b : placed) {
                if (a == b) continue;
                if (rng.bernoulli(0.4)) {
                    const auto& name = spec.relations[static_cast<std::size_t>(
                        rng.uniform_int(0, static_cast<long>(spec.relations.size()) - 1))];
                    out.world.objects[a].relations.emplace_back(name, b);
                }
            }
    }

    for (std::size_t obj = 0; obj < out.world.objects.size(); ++obj) {
        int proposals = static_cast<int>(
            rng.uniform_int(spec.min_proposals_per_object, spec.max_proposals_per_object));
        for (int i = 0; i < proposals; ++i) {
            double target = rng.uniform(spec.jitter_iou_min, spec.jitter_iou_max);
            if (spec.jitter_iou_max >= 1.0 - 1e-12 && spec.jitter_iou_min >= 1.0 - 1e-12)
                target = 1.0;
            out.scene.proposals.push_back(jitter_box(out.world.objects[obj].box, target, rng,
                                                     spec.image_width, spec.image_height));
            out.proposal_object.push_back(obj);
        }
    }
    for (int i = 0; i < spec.distractor_proposals; ++i) {
        ImageSide side = rng.bernoulli(0.5) ? ImageSide::Left : ImageSide::Right;
        out.scene.proposals.push_back(
            random_box(rng, side, spec.image_width, spec.image_height));
        out.proposal_object.push_back(static_cast<std::size_t>(-1));
    }
    return out;
}

OracleProvider::OracleProvider(const SyntheticScene& scene, double noise, std::uint64_t seed)
    : scene_(scene), noise_(noise), seed_(seed) {
    if (noise < 0.0 || noise > 1.0) throw ValidationError("oracle noise must lie in [0,1]");
}

namespace {

/// Objects whose gold box is covered by a predicted proposal of `p`.
std::set<std::size_t> covered_objects(const SyntheticScene& scene, const BoxAttention& p) {
    std::set<std::size_t> covered;
    for (std::size_t j = 0; j < scene.scene.size(); ++j) {
        if (!(p.probs[j] > 0.5)) continue;
        for (std::size_t o = 0; o < scene.world.objects.size(); ++o)
            if (iou(scene.scene.proposals[j], scene.world.objects[o].box) > 0.5)
                covered.insert(o);
    }
    return covered;
}

}  // namespace

std::vector<double> OracleProvider::scores(const GroundingQuery& query) {
    const auto& world = scene_.world;
    const auto& proposals = scene_.scene.proposals;

    // Candidate gold objects for this query.
    std::vector<std::size_t> candidates;
    switch (query.kind) {
        case LearnedKind::Find:
            for (std::size_t o = 0; o < world.objects.size(); ++o)
                if (world.objects[o].category == query.utterance) candidates.push_back(o);
            break;
        case LearnedKind::Filter:
            for (std::size_t o = 0; o < world.objects.size(); ++o)
                if (world.objects[o].attributes.count(query.utterance)) candidates.push_back(o);
            break;
        case LearnedKind::WithRelation: {
            if (query.inputs.size() != 2)
                throw ValidationError("with-relation grounding query needs two inputs");
            std::set<std::size_t> targets = covered_objects(scene_, query.inputs[1]);
            for (std::size_t o = 0; o < world.objects.size(); ++o)
                for (std::size_t t : targets)
                    if (world.related(o, t, query.utterance)) {
                        candidates.push_back(o);
                        break;
                    }
            break;
        }
        case LearnedKind::Project: {
            if (query.inputs.empty())
                throw ValidationError("project grounding query needs the input attention");
            std::set<std::size_t> sources = covered_objects(scene_, query.inputs[0]);
            for (std::size_t o = 0; o < world.objects.size(); ++o)
                for (std::size_t s : sources)
                    if (world.related_any(o, s)) {
                        candidates.push_back(o);
                        break;
                    }
            break;
        }
    }

    std::vector<double> scores(proposals.size(), 0.0);
    for (std::size_t j = 0; j < proposals.size(); ++j) {
        double best = 0.0;
        for (std::size_t o : candidates)
            best = std::max(best, iou(proposals[j], world.objects[o].box));
        scores[j] = best;
    }
    if (noise_ > 0.0) {
        for (std::size_t j = 0; j < scores.size(); ++j) {
            double u = u64_to_unit(hash_u64(seed_, query.node,
                                            static_cast<std::uint64_t>(query.kind),
                                            static_cast<std::uint64_t>(query.restriction), j));
            scores[j] = (1.0 - noise_) * scores[j] + noise_ * u;
        }
    }
    return scores;
}

NumberValue OracleProvider::count(const BoxAttention& input, NodeId, ImageRestriction) {
    return NumberValue{static_cast<double>(covered_objects(scene_, input).size()), 0.0};
}

namespace {

long clamp_count(long v, int max_count) {
    return std::clamp(v, 0L, static_cast<long>(max_count));
}

std::string canonical_module(const std::string& name) {
    return name == "relocate" ? "project" : name;
}

class GoldEvaluator {
  public:
    GoldEvaluator(const Program& program, const GoldWorld& world, int max_count)
        : program_(program), world_(world), max_count_(max_count) {}

    GoldValue eval(NodeId id, ImageRestriction r) const {
        const ProgramNode& node = program_.node(id);
        const std::string module = canonical_module(node.module);
        const std::string utterance = node.utterance ? node.utterance->text : "";

        if (module == "find") {
            std::set<std::size_t> out;
            for (std::size_t o = 0; o < world_.objects.size(); ++o)
                if (world_.objects[o].category == utterance && allowed(o, r)) out.insert(o);
            return {out};
        }
        if (module == "filter") {
            std::set<std::size_t> out;
            for (std::size_t o : objects(node.children[0], r))
                if (world_.objects[o].attributes.count(utterance)) out.insert(o);
            return {out};
        }
        if (module == "with-relation") {
            auto sources = objects(node.children[0], r);
            auto targets = objects(node.children[1], r);
            std::set<std::size_t> out;
            for (std::size_t s : sources)
                for (std::size_t t : targets)
                    if (world_.related(s, t, utterance)) {
                        out.insert(s);
                        break;
                    }
            return {out};
        }
        if (module == "project") {
            auto sources = objects(node.children[0], r);
            std::set<std::size_t> out;
            for (std::size_t o = 0; o < world_.objects.size(); ++o) {
                if (world_.objects[o].category != utterance || !allowed(o, r)) continue;
                for (std::size_t s : sources)
                    if (world_.related_any(o, s)) {
                        out.insert(o);
                        break;
                    }
            }
            return {out};
        }
        if (module == "intersect" || module == "discard") {
            auto a = objects(node.children[0], r);
            auto b = objects(node.children[1], r);
            std::set<std::size_t> out;
            for (std::size_t o : a)
                if (module == "intersect" ? b.count(o) > 0 : b.count(o) == 0) out.insert(o);
            return {out};
        }
        if (module == "in-left-image" || module == "in-right-image") {
            ImageSide side = module == "in-left-image" ? ImageSide::Left : ImageSide::Right;
            std::set<std::size_t> out;
            for (std::size_t o : objects(node.children[0], r))
                if (world_.objects[o].box.image == side) out.insert(o);
            return {out};
        }
        if (module == "count")
            return {static_cast<long>(objects(node.children[0], r).size())};
        if (module == "exist")
            return {clamp_count(static_cast<long>(objects(node.children[0], r).size()),
                                max_count_) >= 1};
        if (module == "equal" || module == "less" || module == "greater" ||
            module == "less-equal" || module == "greater-equal") {
            // Mirror the executor's zero-variance discretization, which clamps
            // point masses into {0..K} before comparing.
            long a = clamp_count(number(node.children[0], r), max_count_);
            long b = clamp_count(number(node.children[1], r), max_count_);
            if (module == "equal") return {a == b};
            if (module == "less") return {a < b};
            if (module == "greater") return {a > b};
            if (module == "less-equal") return {a <= b};
            return {a >= b};
        }
        if (module == "and" || module == "or") {
            bool a = boolean(node.children[0], r);
            bool b = boolean(node.children[1], r);
            return {module == "and" ? a && b : a || b};
        }
        if (module == "sum" || module == "difference")
            return {module == "sum" ? number(node.children[0], r) + number(node.children[1], r)
                                    : number(node.children[0], r) - number(node.children[1], r)};
        if (module == "division") {
            long a = number(node.children[0], r);
            long b = number(node.children[1], r);
            if (a == 0 || b == 0)
                throw ValidationError("division requires operands with nonzero mean");
            double q = static_cast<double>(a) / static_cast<double>(b);
            return {clamp_count(std::llround(q), max_count_)};
        }
        if (module == "in-at-least-one-image") {
            return {boolean(node.children[0], compose(r, ImageRestriction::Left)) ||
                    boolean(node.children[0], compose(r, ImageRestriction::Right))};
        }
        if (module == "in-each-image") {
            return {boolean(node.children[0], compose(r, ImageRestriction::Left)) &&
                    boolean(node.children[0], compose(r, ImageRestriction::Right))};
        }
        if (module == "in-one-other-image") {
            ImageRestriction left = compose(r, ImageRestriction::Left);
            ImageRestriction right = compose(r, ImageRestriction::Right);
            bool first_left = boolean(node.children[0], left);
            bool first_right = boolean(node.children[0], right);
            bool second_left = boolean(node.children[1], left);
            bool second_right = boolean(node.children[1], right);
            return {(first_left && second_right) || (first_right && second_left)};
        }
        throw ValidationError("gold semantics has no rule for module '" + node.module + "'");
    }

  private:
    bool allowed(std::size_t object, ImageRestriction r) const {
        return allows(r, world_.objects[object].box.image);
    }
    std::set<std::size_t> objects(NodeId id, ImageRestriction r) const {
        return eval(id, r).as_objects();
    }
    long number(NodeId id, ImageRestriction r) const { return eval(id, r).as_number(); }
    bool boolean(NodeId id, ImageRestriction r) const { return eval(id, r).as_bool(); }

    const Program& program_;
    const GoldWorld& world_;
    int max_count_;
};

GoldValue evaluate_gold_node(const Program& program, NodeId node, const GoldWorld& world,
                             int max_count, ImageRestriction restriction) {
    return GoldEvaluator(program, world, max_count).eval(node, restriction);
}

class RecordingProvider : public GroundingProvider {
  public:
    RecordingProvider(OracleProvider& inner, std::vector<GroundingRecord>& records,
                      std::vector<CountRecord>& counts)
        : inner_(inner), records_(records), counts_(counts) {}

    std::vector<double> scores(const GroundingQuery& query) override {
        auto result = inner_.scores(query);
        bool seen = std::any_of(records_.begin(), records_.end(), [&](const GroundingRecord& g) {
            return g.node == query.node && g.kind == query.kind &&
                   g.restriction == query.restriction;
        });
        if (!seen)
            records_.push_back(
                GroundingRecord{query.node, query.kind, query.restriction, result});
        return result;
    }

    NumberValue count(const BoxAttention& input, NodeId node,
                      ImageRestriction restriction) override {
        NumberValue result = inner_.count(input, node, restriction);
        bool seen = std::any_of(counts_.begin(), counts_.end(), [&](const CountRecord& c) {
            return c.node == node && c.restriction == restriction;
        });
        if (!seen) counts_.push_back(CountRecord{node, restriction, result});
        return result;
    }

  private:
    OracleProvider& inner_;
    std::vector<GroundingRecord>& records_;
    std::vector<CountRecord>& counts_;
};

void check_vocabulary(const Program& program, const SceneSpec& spec) {
    auto known = [](const std::vector<std::string>& vocab, const std::string& term) {
        return std::find(vocab.begin(), vocab.end(), term) != vocab.end();
    };
    for (NodeId id = 0; id < program.size(); ++id) {
        const auto& node = program.node(id);
        if (!node.utterance) continue;
        const std::string module = canonical_module(node.module);
        const std::string& term = node.utterance->text;
        bool ok = true;
        if (module == "find" || module == "project") ok = known(spec.categories, term);
        else if (module == "filter") ok = known(spec.attributes, term);
        else if (module == "with-relation") ok = known(spec.relations, term);
        if (!ok)
            throw ValidationError("program node " + std::to_string(id) + " uses '" + term +
                                  "', which is not in the scene spec vocabulary");
    }
}

}  // namespace

GoldValue evaluate_gold(const Program& program, const GoldWorld& world, int max_count,
                        ImageRestriction restriction) {
    return evaluate_gold_node(program, program.root(), world, max_count, restriction);
}

SyntheticExample generate_example(const std::string& example_id, const Program& program,
                                  const SceneSpec& spec, std::uint64_t seed,
                                  const ExecConfig& config, double noise) {
    SyntheticExample example;
    example.id = example_id;
    example.program = program;
    if (!example.program.typechecked()) typecheck(example.program, SignatureTable::visual());
    check_vocabulary(example.program, spec);

    example.scene = generate_scene(spec, seed);
    example.scene.scene.id = example_id;

    OracleProvider oracle(example.scene, noise, hash_u64(seed, 0x6f7261636cULL));
    RecordingProvider recorder(oracle, example.groundings, example.counts);
    example.trace = execute(example.program, example.scene.scene, recorder, config);

    // Gold annotations for every learned box-typed node, per image, in every
    // macro context the node actually ran in.
    for (NodeId id = 0; id < example.program.size(); ++id) {
        const auto& node = example.program.node(id);
        if (!is_learned_module(canonical_module(node.module))) continue;
        for (const auto& entry : example.trace.entries) {
            if (entry.node != id || entry.restriction == ImageRestriction::Neither) continue;
            GoldValue gold = evaluate_gold_node(example.program, id, example.scene.world,
                                                config.max_count, entry.restriction);
            for (ImageSide side : {ImageSide::Left, ImageSide::Right}) {
                if (!allows(entry.restriction, side)) continue;
                VisualAnnotation annotation;
                annotation.example_id = example_id;
                annotation.node = id;
                annotation.module = canonical_module(node.module);
                annotation.image = side;
                for (std::size_t o : gold.as_objects())
                    if (example.scene.world.objects[o].box.image == side)
                        annotation.boxes.push_back(example.scene.world.objects[o].box);
                example.annotations.push_back(std::move(annotation));
            }
        }
    }

    example.expected = evaluate_gold(example.program, example.scene.world, config.max_count);
    return example;
}

namespace {

class ProgramGenerator {
  public:
    ProgramGenerator(const SceneSpec& spec, Rng& rng) : spec_(spec), rng_(rng) {}

    std::string boolean_root(int budget) {
        // Macros mirror the corpus convention: quantifiers only at the top.
        if (budget >= 3 && rng_.bernoulli(0.25)) {
            if (budget >= 5 && rng_.bernoulli(0.3))
                return binary("in-one-other-image", budget, 2, [&](int b) { return boolean(b); });
            return (rng_.bernoulli(0.5) ? std::string("in-at-least-one-image(")
                                        : std::string("in-each-image(")) +
                   boolean(budget - 1) + ")";
        }
        return boolean(budget);
    }

    std::string boolean(int budget) {
        if (budget >= 5 && rng_.bernoulli(0.45)) {
            if (rng_.bernoulli(0.35))
                return binary(rng_.bernoulli(0.5) ? "and" : "or", budget, 2,
                              [&](int b) { return boolean(b); });
            static const char* kCompare[] = {"equal", "less", "greater", "less-equal",
                                             "greater-equal"};
            return binary(kCompare[rng_.uniform_int(0, 4)], budget, 2,
                          [&](int b) { return number(b); });
        }
        return "exist(" + box(budget - 1) + ")";
    }

    std::string number(int budget) {
        if (budget >= 5 && rng_.bernoulli(0.15))
            return binary(rng_.bernoulli(0.5) ? "sum" : "difference", budget, 2,
                          [&](int b) { return number(b); });
        return "count(" + box(budget - 1) + ")";
    }

    std::string box(int budget) {
        if (budget >= 3 && rng_.bernoulli(0.35)) {
            double which = rng_.uniform();
            if (which < 0.4) {
                std::string name = "with-relation[" + pick(spec_.relations) + "]";
                return binary(name.c_str(), budget, 1, [&](int b) { return box(b); });
            }
            return binary(which < 0.7 ? "intersect" : "discard", budget, 1,
                          [&](int b) { return box(b); });
        }
        if (budget >= 2 && rng_.bernoulli(0.55)) {
            double which = rng_.uniform();
            if (which < 0.5) return "filter[" + pick(spec_.attributes) + "](" + box(budget - 1) + ")";
            if (which < 0.7) return "project[" + pick(spec_.categories) + "](" + box(budget - 1) + ")";
            if (which < 0.85) return "in-left-image(" + box(budget - 1) + ")";
            return "in-right-image(" + box(budget - 1) + ")";
        }
        return "find[" + pick(spec_.categories) + "]";
    }

  private:
    template <typename Gen>
    std::string binary(const char* name, int budget, int min_each, const Gen& gen) {
        int remaining = budget - 1;
        int first = static_cast<int>(
            rng_.uniform_int(min_each, std::max(min_each, remaining - min_each)));
        std::string lhs = gen(first);
        std::string rhs = gen(remaining - first);
        return std::string(name) + "(" + lhs + ", " + rhs + ")";
    }

    std::string pick(const std::vector<std::string>& vocab) {
        return vocab[static_cast<std::size_t>(
            rng_.uniform_int(0, static_cast<long>(vocab.size()) - 1))];
    }

    const SceneSpec& spec_;
    Rng& rng_;
};

}  // namespace

Program generate_program(const SceneSpec& spec, std::uint64_t seed, int max_modules) {
    spec.validate();
    if (max_modules < 2)
        throw ValidationError("program generator needs a budget of at least 2 modules");
    Rng rng(hash_u64(seed, 0x70726f67ULL));
    ProgramGenerator gen(spec, rng);
    Program p = parse_typed(gen.boolean_root(max_modules), SignatureTable::visual());
    if (static_cast<int>(p.size()) > max_modules)
        throw std::logic_error("program generator exceeded its module budget");
    return p;
}

}  // namespace nmneval
