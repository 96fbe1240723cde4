#include "nmneval/program.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "nmneval/types.hpp"

namespace nmneval {

const char* to_string(ValueType t) {
    switch (t) {
        case ValueType::Boolean: return "boolean";
        case ValueType::Number: return "number";
        case ValueType::BoxAttention: return "box_attention";
        case ValueType::TokenDist: return "token_dist";
        case ValueType::Program: return "program";
    }
    return "?";
}

ValueType value_type_from_name(const std::string& name) {
    if (name == "boolean") return ValueType::Boolean;
    if (name == "number") return ValueType::Number;
    if (name == "box_attention") return ValueType::BoxAttention;
    if (name == "token_dist") return ValueType::TokenDist;
    if (name == "program") return ValueType::Program;
    throw ValidationError("unknown value type: " + name);
}

void UtteranceAttention::validate() const {
    if (!weights) return;
    double total = 0.0;
    for (double w : *weights) {
        if (!(w >= 0.0)) throw ValidationError("utterance attention weight is negative");
        total += w;
    }
    if (std::fabs(total - 1.0) > 1e-6)
        throw ValidationError("utterance attention weights do not sum to 1");
}

SignatureTable SignatureTable::visual() {
    using VT = ValueType;
    SignatureTable t;
    auto box = std::vector<VT>{VT::BoxAttention};
    auto box2 = std::vector<VT>{VT::BoxAttention, VT::BoxAttention};
    auto num2 = std::vector<VT>{VT::Number, VT::Number};
    auto bool2 = std::vector<VT>{VT::Boolean, VT::Boolean};

    t.add({"find", {}, true, VT::BoxAttention});
    t.add({"filter", box, true, VT::BoxAttention});
    t.add({"with-relation", box2, true, VT::BoxAttention});
    t.add({"project", box, true, VT::BoxAttention});
    t.add_alias("relocate", "project");
    t.add({"count", box, false, VT::Number});
    t.add({"exist", box, false, VT::Boolean});
    for (const char* cmp : {"equal", "less", "greater", "less-equal", "greater-equal"})
        t.add({cmp, num2, false, VT::Boolean});
    t.add({"and", bool2, false, VT::Boolean});
    t.add({"or", bool2, false, VT::Boolean});
    for (const char* arith : {"sum", "difference", "division"})
        t.add({arith, num2, false, VT::Number});
    t.add({"intersect", box2, false, VT::BoxAttention});
    t.add({"discard", box2, false, VT::BoxAttention});
    t.add({"in-left-image", box, false, VT::BoxAttention});
    t.add({"in-right-image", box, false, VT::BoxAttention});
    t.add({"in-at-least-one-image", {VT::Program}, false, VT::Boolean});
    t.add({"in-each-image", {VT::Program}, false, VT::Boolean});
    t.add({"in-one-other-image", {VT::Program, VT::Program}, false, VT::Boolean});
    return t;
}

void SignatureTable::add(ModuleSignature sig) {
    if (contains(sig.name))
        throw ValidationError("duplicate module signature: " + sig.name);
    signatures_.push_back(std::move(sig));
}

void SignatureTable::add_alias(const std::string& alias, const std::string& target) {
    if (contains(alias)) throw ValidationError("alias shadows existing module: " + alias);
    aliases_.emplace_back(alias, target);
}

std::string SignatureTable::canonical_name(const std::string& name) const {
    for (const auto& [alias, target] : aliases_)
        if (alias == name) return target;
    return name;
}

const ModuleSignature* SignatureTable::find(const std::string& name) const {
    std::string canonical = canonical_name(name);
    for (const auto& sig : signatures_)
        if (sig.name == canonical) return &sig;
    return nullptr;
}

bool Program::typechecked() const {
    return !nodes_.empty() &&
           std::all_of(nodes_.begin(), nodes_.end(),
                       [](const ProgramNode& n) { return n.type.has_value(); });
}

namespace {

bool is_name_start(char c) { return c >= 'a' && c <= 'z'; }
bool is_name_char(char c) { return is_name_start(c) || (c >= '0' && c <= '9') || c == '-'; }

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

class Parser {
  public:
    Parser(const std::string& text, std::vector<ProgramNode>& nodes)
        : text_(text), nodes_(nodes) {}

    NodeId parse_call() {
        skip_ws();
        if (at_end() || !is_name_start(text_[pos_]))
            throw ParseError("expected module name", pos_);
        std::size_t start = pos_;
        while (!at_end() && is_name_char(text_[pos_])) ++pos_;

        NodeId id = nodes_.size();
        nodes_.push_back(ProgramNode{text_.substr(start, pos_ - start), std::nullopt, {}, {}});

        skip_ws();
        if (!at_end() && text_[pos_] == '[') {
            std::size_t bracket = pos_;
            std::size_t close = text_.find(']', pos_ + 1);
            if (close == std::string::npos) throw ParseError("unclosed '['", bracket);
            nodes_[id].utterance =
                UtteranceAttention{trim(text_.substr(pos_ + 1, close - pos_ - 1)), std::nullopt};
            pos_ = close + 1;
        }

        skip_ws();
        if (!at_end() && text_[pos_] == '(') {
            std::size_t paren = pos_;
            ++pos_;
            skip_ws();
            if (at_end()) throw ParseError("unclosed '('", paren);
            if (text_[pos_] == ')') throw ParseError("empty argument list", pos_);
            while (true) {
                NodeId child = parse_call();  // may reallocate nodes_
                nodes_[id].children.push_back(child);
                skip_ws();
                if (at_end()) throw ParseError("unclosed '('", paren);
                if (text_[pos_] == ',') {
                    ++pos_;
                    continue;
                }
                if (text_[pos_] == ')') {
                    ++pos_;
                    break;
                }
                throw ParseError("expected ',' or ')'", pos_);
            }
        }
        return id;
    }

    void skip_ws() {
        while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    bool at_end() const { return pos_ >= text_.size(); }
    std::size_t pos() const { return pos_; }

  private:
    const std::string& text_;
    std::vector<ProgramNode>& nodes_;
    std::size_t pos_ = 0;
};

}  // namespace

Program parse(const std::string& text) {
    Program program;
    Parser parser(text, program.nodes_);
    parser.skip_ws();
    if (parser.at_end()) throw ParseError("empty program", 0);
    parser.parse_call();
    parser.skip_ws();
    if (!parser.at_end()) throw ParseError("trailing characters after program", parser.pos());
    return program;
}

namespace {

void linearize_node(const Program& p, NodeId id, std::string& out) {
    const ProgramNode& node = p.node(id);
    out += node.module;
    if (node.utterance) {
        out += '[';
        out += node.utterance->text;
        out += ']';
    }
    if (!node.children.empty()) {
        out += '(';
        for (std::size_t i = 0; i < node.children.size(); ++i) {
            if (i) out += ", ";
            linearize_node(p, node.children[i], out);
        }
        out += ')';
    }
}

}  // namespace

std::string linearize(const Program& program) {
    std::string out;
    linearize_node(program, program.root(), out);
    return out;
}

void typecheck(Program& program, const SignatureTable& table) {
    std::vector<std::string> errors;

    // Post-order so argument types exist before the parent check.
    std::vector<NodeId> order;
    order.reserve(program.size());
    std::vector<NodeId> stack{program.root()};
    while (!stack.empty()) {
        NodeId id = stack.back();
        stack.pop_back();
        order.push_back(id);
        for (NodeId c : program.node(id).children) stack.push_back(c);
    }
    std::reverse(order.begin(), order.end());

    for (NodeId id : order) {
        ProgramNode& node = program.nodes_[id];
        const ModuleSignature* sig = table.find(node.module);
        if (!sig) {
            errors.push_back("node " + std::to_string(id) + ": unknown module '" + node.module +
                             "'");
            continue;
        }
        if (node.utterance) node.utterance->validate();
        if (sig->takes_utterance_attention && !node.utterance)
            errors.push_back("node " + std::to_string(id) + ": module '" + node.module +
                             "' requires an utterance attention argument");
        if (!sig->takes_utterance_attention && node.utterance)
            errors.push_back("node " + std::to_string(id) + ": module '" + node.module +
                             "' does not take an utterance attention argument");
        if (node.children.size() != sig->arg_types.size()) {
            errors.push_back("node " + std::to_string(id) + ": module '" + node.module +
                             "' expects " + std::to_string(sig->arg_types.size()) +
                             " argument(s), got " + std::to_string(node.children.size()));
        } else {
            for (std::size_t i = 0; i < node.children.size(); ++i) {
                const auto& child = program.node(node.children[i]);
                if (!child.type) continue;  // already reported below the child
                ValueType expected = sig->arg_types[i];
                // Program-valued parameters take a Boolean-rooted subprogram.
                if (expected == ValueType::Program) expected = ValueType::Boolean;
                if (*child.type != expected)
                    errors.push_back("node " + std::to_string(node.children[i]) + ": module '" +
                                     node.module + "' expects " + to_string(sig->arg_types[i]) +
                                     " argument, got " + to_string(*child.type));
            }
        }
        node.type = sig->return_type;
    }

    const auto& root = program.node(program.root());
    if (root.type && *root.type != ValueType::Boolean && *root.type != ValueType::Number &&
        *root.type != ValueType::TokenDist)
        errors.push_back("node 0: program root has type " + std::string(to_string(*root.type)) +
                         "; expected boolean, number or token_dist");

    if (!errors.empty()) {
        std::ostringstream msg;
        msg << "typecheck failed:";
        for (const auto& e : errors) msg << "\n  " << e;
        // Leave no stale annotations behind on rejection.
        for (auto& node : program.nodes_) node.type.reset();
        throw TypecheckError(msg.str());
    }
}

Program parse_typed(const std::string& text, const SignatureTable& table) {
    Program p = parse(text);
    typecheck(p, table);
    return p;
}

bool structurally_equal(const Program& a, const Program& b) {
    if (a.size() != b.size()) return false;
    for (NodeId id = 0; id < a.size(); ++id) {
        const auto& na = a.node(id);
        const auto& nb = b.node(id);
        if (na.module != nb.module || na.children != nb.children) return false;
        if (na.utterance.has_value() != nb.utterance.has_value()) return false;
        if (na.utterance && na.utterance->text != nb.utterance->text) return false;
    }
    return true;
}

bool is_learned_module(const std::string& name) {
    return name == "find" || name == "filter" || name == "with-relation" || name == "project";
}

bool is_macro_module(const std::string& name) {
    return name == "in-at-least-one-image" || name == "in-each-image" ||
           name == "in-one-other-image";
}

}  // namespace nmneval
