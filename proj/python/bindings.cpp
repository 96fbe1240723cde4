#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nmneval/faithfulness.hpp"
#include "nmneval/io.hpp"
#include "nmneval/prob.hpp"
#include "nmneval/synth.hpp"

namespace py = pybind11;
using namespace nmneval;

namespace {

ImageSide side_from_string(const std::string& s) {
    if (s == "left") return ImageSide::Left;
    if (s == "right") return ImageSide::Right;
    throw ValidationError("image must be 'left' or 'right'");
}

py::object value_to_py(const Value& value) {
    if (const auto* t = std::get_if<TruthProb>(&value)) return py::float_(t->value);
    if (const auto* n = std::get_if<NumberValue>(&value))
        return py::make_tuple(n->mean, n->var);
    return py::cast(std::get<BoxAttention>(value).probs);
}

py::dict module_score_to_py(const ModuleScore& s) {
    py::dict d;
    d["precision"] = s.precision;
    d["recall"] = s.recall;
    d["f1"] = s.f1;
    d["examples"] = s.examples;
    return d;
}

py::dict report_to_py(const FaithfulnessReport& report) {
    py::dict d;
    d["scheme"] = to_string(report.scheme);
    d["overall"] = module_score_to_py(report.overall);
    py::dict modules;
    for (const auto& [name, score] : report.modules)
        modules[py::str(name)] = module_score_to_py(score);
    d["modules"] = modules;
    py::list per_example;
    for (const auto& [id, s] : report.per_example) {
        py::dict e;
        e["id"] = id;
        e["precision"] = s.precision;
        e["recall"] = s.recall;
        e["f1"] = s.f1;
        per_example.append(e);
    }
    d["per_example"] = per_example;
    return d;
}

std::vector<InstanceScore> synthetic_instances(const SyntheticExample& example,
                                               const MetricConfig& config) {
    std::vector<InstanceScore> instances;
    for (const auto& annotation : example.annotations) {
        ImageRestriction ctx = annotation.image == ImageSide::Left ? ImageRestriction::Left
                                                                   : ImageRestriction::Right;
        const Value* value = example.trace.find(annotation.node, ctx);
        if (!value) value = example.trace.find(annotation.node, ImageRestriction::Both);
        if (!value) throw ValidationError("trace is missing an annotated node");
        instances.push_back(InstanceScore{
            annotation.example_id, annotation.module, annotation.image,
            instance_counts(annotation, std::get<BoxAttention>(*value), example.scene.scene,
                            config)});
    }
    return instances;
}

class PyGroundingProvider : public GroundingProvider {
  public:
    using GroundingProvider::GroundingProvider;

    std::vector<double> scores(const GroundingQuery& query) override {
        PYBIND11_OVERRIDE_PURE(std::vector<double>, GroundingProvider, scores, query);
    }

    NumberValue count(const BoxAttention& input, NodeId node,
                      ImageRestriction restriction) override {
        PYBIND11_OVERRIDE(NumberValue, GroundingProvider, count, input, node, restriction);
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Deterministic executor and module-wise faithfulness metrics for "
              "module-network programs";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    // ---- program DSL
    py::class_<Program>(m, "Program")
        .def_property_readonly("size", &Program::size)
        .def_property_readonly("typechecked", &Program::typechecked)
        .def("linearize", [](const Program& p) { return linearize(p); })
        .def("module", [](const Program& p, NodeId id) { return p.node(id).module; })
        .def("utterance",
             [](const Program& p, NodeId id) -> py::object {
                 const auto& u = p.node(id).utterance;
                 return u ? py::cast(u->text) : py::none();
             })
        .def("children", [](const Program& p, NodeId id) { return p.node(id).children; })
        .def("node_type",
             [](const Program& p, NodeId id) -> py::object {
                 const auto& t = p.node(id).type;
                 return t ? py::cast(std::string(to_string(*t))) : py::none();
             })
        .def("__len__", &Program::size)
        .def("__repr__", [](const Program& p) { return "<Program " + linearize(p) + ">"; });

    m.def("parse", &parse, py::arg("text"), "Parse a linearized module program");
    m.def(
        "parse_typed",
        [](const std::string& text) { return parse_typed(text, SignatureTable::visual()); },
        py::arg("text"), "Parse and typecheck against the visual module signatures");
    m.def("linearize", &linearize, py::arg("program"));

    // ---- probability algebra
    m.def(
        "discretize",
        [](double mean, double var, int max_count) {
            return discretize(NumberValue{mean, var}, max_count).probs;
        },
        py::arg("mean"), py::arg("var"), py::arg("max_count") = 72,
        "Categorical over {0..K} from a Gaussian number");
    m.def(
        "compare",
        [](const std::string& kind, std::pair<double, double> a, std::pair<double, double> b,
           int max_count) {
            return compare(compare_kind_from_name(kind),
                           make_number(a.first, a.second),
                           make_number(b.first, b.second), max_count)
                .value;
        },
        py::arg("kind"), py::arg("a"), py::arg("b"), py::arg("max_count") = 72,
        "Probability of equal/less/greater/less-equal/greater-equal over (mean, var) pairs");
    m.def("bool_and", [](double a, double b) {
        return bool_combine(BoolKind::And, TruthProb(a), TruthProb(b)).value;
    });
    m.def("bool_or", [](double a, double b) {
        return bool_combine(BoolKind::Or, TruthProb(a), TruthProb(b)).value;
    });
    auto arith = [](GaussianArithKind kind) {
        return [kind](std::pair<double, double> a, std::pair<double, double> b) {
            NumberValue r = gaussian_arith(kind, make_number(a.first, a.second),
                                           make_number(b.first, b.second));
            return std::make_pair(r.mean, r.var);
        };
    };
    m.def("gaussian_sum", arith(GaussianArithKind::Sum));
    m.def("gaussian_difference", arith(GaussianArithKind::Difference));
    m.def("gaussian_division", arith(GaussianArithKind::Division));
    m.def(
        "value_dist_add",
        [](std::vector<double> xs, std::vector<double> xp, std::vector<double> ys,
           std::vector<double> yp) {
            ValueDist z = value_dist_arith(ValueDistArithKind::Addition,
                                           ValueDist{std::move(xs), std::move(xp)},
                                           ValueDist{std::move(ys), std::move(yp)});
            return std::make_pair(z.support, z.probs);
        },
        py::arg("x_support"), py::arg("x_probs"), py::arg("y_support"), py::arg("y_probs"));
    m.def("value_dist_subtract",
          [](std::vector<double> xs, std::vector<double> xp, std::vector<double> ys,
             std::vector<double> yp) {
              ValueDist z = value_dist_arith(ValueDistArithKind::Subtraction,
                                             ValueDist{std::move(xs), std::move(xp)},
                                             ValueDist{std::move(ys), std::move(yp)});
              return std::make_pair(z.support, z.probs);
          });

    // ---- scenes and execution
    py::class_<BoundingBox>(m, "BoundingBox")
        .def(py::init([](double x1, double y1, double x2, double y2, const std::string& image) {
                 BoundingBox b{x1, y1, x2, y2, side_from_string(image)};
                 b.validate();
                 return b;
             }),
             py::arg("x1"), py::arg("y1"), py::arg("x2"), py::arg("y2"),
             py::arg("image") = "left")
        .def_readonly("x1", &BoundingBox::x1)
        .def_readonly("y1", &BoundingBox::y1)
        .def_readonly("x2", &BoundingBox::x2)
        .def_readonly("y2", &BoundingBox::y2)
        .def_property_readonly("image",
                               [](const BoundingBox& b) { return std::string(to_string(b.image)); });
    m.def("iou", &iou, py::arg("a"), py::arg("b"));

    py::class_<Scene>(m, "Scene")
        .def(py::init([](std::string id, std::vector<BoundingBox> proposals) {
                 return Scene{std::move(id), std::move(proposals)};
             }),
             py::arg("id"), py::arg("proposals"))
        .def_readonly("id", &Scene::id)
        .def_readonly("proposals", &Scene::proposals)
        .def("__len__", &Scene::size);

    py::class_<GroundingQuery>(m, "GroundingQuery")
        .def_property_readonly("kind",
                               [](const GroundingQuery& q) {
                                   return std::string(to_string(q.kind));
                               })
        .def_readonly("utterance", &GroundingQuery::utterance)
        .def_property_readonly("inputs",
                               [](const GroundingQuery& q) {
                                   std::vector<std::vector<double>> inputs;
                                   for (const auto& p : q.inputs) inputs.push_back(p.probs);
                                   return inputs;
                               })
        .def_readonly("node", &GroundingQuery::node)
        .def_property_readonly("restriction", [](const GroundingQuery& q) {
            return to_string(q.restriction);
        });

    py::class_<GroundingProvider, PyGroundingProvider>(m, "GroundingProvider")
        .def(py::init<>())
        .def("scores", &GroundingProvider::scores)
        .def("count", &GroundingProvider::count);

    py::class_<ExecConfig>(m, "ExecConfig")
        .def(py::init([](int max_count, double sigma_sq, const std::string& count_strategy,
                         double cluster_iou) {
                 return ExecConfig{max_count, sigma_sq,
                                   count_strategy_from_name(count_strategy), cluster_iou};
             }),
             py::arg("max_count") = 72, py::arg("sigma_sq") = 0.25,
             py::arg("count_strategy") = "sum", py::arg("cluster_iou") = 0.5)
        .def_readwrite("max_count", &ExecConfig::max_count)
        .def_readwrite("sigma_sq", &ExecConfig::sigma_sq)
        .def_readwrite("cluster_iou", &ExecConfig::cluster_iou);

    py::class_<ExecutionTrace>(m, "ExecutionTrace")
        .def_property_readonly("denotation",
                               [](const ExecutionTrace& t) { return value_to_py(t.denotation); })
        .def_property_readonly("entries", [](const ExecutionTrace& t) {
            py::list entries;
            for (const auto& e : t.entries) {
                py::dict d;
                d["node"] = e.node;
                d["context"] = to_string(e.restriction);
                d["value"] = value_to_py(e.value);
                entries.append(d);
            }
            return entries;
        });

    m.def(
        "execute",
        [](const Program& program, const Scene& scene, GroundingProvider& provider,
           const ExecConfig& config) { return execute(program, scene, provider, config); },
        py::arg("program"), py::arg("scene"), py::arg("provider"),
        py::arg("config") = ExecConfig{});

    // ---- synthetic oracle harness
    py::class_<SceneSpec>(m, "SceneSpec")
        .def(py::init<>())
        .def_readwrite("image_width", &SceneSpec::image_width)
        .def_readwrite("image_height", &SceneSpec::image_height)
        .def_readwrite("min_objects_per_image", &SceneSpec::min_objects_per_image)
        .def_readwrite("max_objects_per_image", &SceneSpec::max_objects_per_image)
        .def_readwrite("categories", &SceneSpec::categories)
        .def_readwrite("attributes", &SceneSpec::attributes)
        .def_readwrite("relations", &SceneSpec::relations)
        .def_readwrite("jitter_iou_min", &SceneSpec::jitter_iou_min)
        .def_readwrite("jitter_iou_max", &SceneSpec::jitter_iou_max)
        .def_readwrite("min_proposals_per_object", &SceneSpec::min_proposals_per_object)
        .def_readwrite("max_proposals_per_object", &SceneSpec::max_proposals_per_object)
        .def_readwrite("distractor_proposals", &SceneSpec::distractor_proposals);

    py::class_<SyntheticScene>(m, "SyntheticScene")
        .def_property_readonly("scene", [](const SyntheticScene& s) { return s.scene; })
        .def_property_readonly("gold_boxes", [](const SyntheticScene& s) {
            std::vector<BoundingBox> boxes;
            for (const auto& object : s.world.objects) boxes.push_back(object.box);
            return boxes;
        });

    py::class_<OracleProvider, GroundingProvider>(m, "OracleProvider")
        .def(py::init<const SyntheticScene&, double, std::uint64_t>(), py::arg("scene"),
             py::arg("noise") = 0.0, py::arg("seed") = 0, py::keep_alive<1, 2>());

    py::class_<SyntheticExample>(m, "SyntheticExample")
        .def_readonly("id", &SyntheticExample::id)
        .def_property_readonly("program",
                               [](const SyntheticExample& e) { return e.program; })
        .def_property_readonly("scene", [](const SyntheticExample& e) { return e.scene.scene; })
        .def_property_readonly("trace", [](const SyntheticExample& e) { return e.trace; })
        .def_property_readonly("denotation",
                               [](const SyntheticExample& e) {
                                   return value_to_py(e.trace.denotation);
                               })
        .def_property_readonly("expected",
                               [](const SyntheticExample& e) -> py::object {
                                   if (std::holds_alternative<bool>(e.expected.value))
                                       return py::bool_(e.expected.as_bool());
                                   return py::int_(e.expected.as_number());
                               })
        .def_property_readonly("annotation_count", [](const SyntheticExample& e) {
            return e.annotations.size();
        });

    m.def("generate_scene", &generate_scene, py::arg("spec"), py::arg("seed"));
    m.def("generate_program", &generate_program, py::arg("spec"), py::arg("seed"),
          py::arg("max_modules") = 13);
    m.def(
        "generate_example",
        [](const std::string& id, const Program& program, const SceneSpec& spec,
           std::uint64_t seed, const ExecConfig& config, double noise) {
            return generate_example(id, program, spec, seed, config, noise);
        },
        py::arg("id"), py::arg("program"), py::arg("spec"), py::arg("seed"),
        py::arg("config") = ExecConfig{}, py::arg("noise") = 0.0);

    // ---- faithfulness
    m.def(
        "measure_faithfulness",
        [](const SyntheticExample& example, double iou_threshold, double prob_threshold,
           const std::string& scheme) {
            MetricConfig config;
            config.iou_threshold = iou_threshold;
            config.prob_threshold = prob_threshold;
            config.scheme = aggregation_from_name(scheme);
            return report_to_py(aggregate(synthetic_instances(example, config), config.scheme));
        },
        py::arg("example"), py::arg("iou_threshold") = 0.5, py::arg("prob_threshold") = 0.5,
        py::arg("scheme") = "examplewise",
        "Score the oracle execution of a synthetic example against its gold annotations");
    m.def(
        "upper_bound_faithfulness",
        [](const SyntheticExample& example, double iou_threshold, const std::string& scheme) {
            MetricConfig config;
            config.iou_threshold = iou_threshold;
            config.scheme = aggregation_from_name(scheme);
            std::map<std::string, Scene> scenes{{example.id, example.scene.scene}};
            return report_to_py(upper_bound(example.annotations, scenes, config));
        },
        py::arg("example"), py::arg("iou_threshold") = 0.5, py::arg("scheme") = "examplewise",
        "Maximal faithfulness conditioned on the example's proposals");

    m.def(
        "text_instance_score",
        [](std::vector<double> probs, std::vector<std::pair<int, int>> spans) {
            return text_instance_score(TokenDist{std::move(probs)}, spans);
        },
        py::arg("token_dist"), py::arg("spans"),
        "Cross-entropy of gold spans under a token distribution");

    m.def(
        "permutation_test",
        [](std::vector<double> a, std::vector<double> b, long trials, std::uint64_t seed,
           bool two_sided) {
            PermutationResult r =
                permutation_test(a, b, trials, seed,
                                 two_sided ? TestSide::TwoSided : TestSide::OneSided);
            py::dict d;
            d["p_value"] = r.p_value;
            d["delta_original"] = r.delta_original;
            d["trials"] = r.trials;
            d["seed"] = r.seed;
            return d;
        },
        py::arg("scores_a"), py::arg("scores_b"), py::arg("trials") = 100000,
        py::arg("seed") = 0, py::arg("two_sided") = true,
        "Paired permutation significance test over per-example scores");
}
