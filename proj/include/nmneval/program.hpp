#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nmneval/error.hpp"
#include "nmneval/types.hpp"

namespace nmneval {

enum class ValueType { Boolean, Number, BoxAttention, TokenDist, Program };

const char* to_string(ValueType t);
ValueType value_type_from_name(const std::string& name);

/// Distribution over utterance tokens routed to a module. Parsing captures
/// the raw bracket text; token weights are attached later by data files.
struct UtteranceAttention {
    std::string text;
    std::optional<std::vector<double>> weights;

    void validate() const;
};

struct ModuleSignature {
    std::string name;
    std::vector<ValueType> arg_types;
    bool takes_utterance_attention = false;
    ValueType return_type = ValueType::Boolean;
};

/// Name -> signature lookup. Supports aliases (relocate == project) and
/// loading extra module sets from a JSON config.
class SignatureTable {
  public:
    /// The two-image visual module set (find .. in-one-other-image).
    static SignatureTable visual();

    void add(ModuleSignature sig);
    void add_alias(const std::string& alias, const std::string& target);

    const ModuleSignature* find(const std::string& name) const;
    bool contains(const std::string& name) const { return find(name) != nullptr; }

    /// Canonical module name after alias resolution (e.g. relocate -> project).
    std::string canonical_name(const std::string& name) const;

    const std::vector<ModuleSignature>& signatures() const { return signatures_; }

  private:
    std::vector<ModuleSignature> signatures_;
    std::vector<std::pair<std::string, std::string>> aliases_;
};

struct ProgramNode {
    std::string module;
    std::optional<UtteranceAttention> utterance;
    std::vector<NodeId> children;
    std::optional<ValueType> type;  // filled in by typecheck
};

/// Typed abstract syntax tree of module calls. Node ids are pre-order and
/// dense (root = 0), so annotations keyed by NodeId survive reparsing.
class Program {
  public:
    NodeId root() const { return 0; }
    std::size_t size() const { return nodes_.size(); }

    const ProgramNode& node(NodeId id) const { return nodes_.at(id); }
    const std::vector<ProgramNode>& nodes() const { return nodes_; }

    bool typechecked() const;

    friend Program parse(const std::string& text);
    friend void typecheck(Program& program, const SignatureTable& table);

  private:
    std::vector<ProgramNode> nodes_;
};

/// Parse a linearized program. Grammar:
///   call := name ('[' freetext ']')? ('(' call (',' call)* ')')?
/// with names matching [a-z][a-z0-9-]*. Bracket text is kept verbatim apart
/// from trimming surrounding whitespace. Throws ParseError with a character
/// offset on malformed input.
Program parse(const std::string& text);

/// Canonical string form: single space after commas, no other whitespace.
/// parse(linearize(p)) is structurally identical to p.
std::string linearize(const Program& program);

/// Annotate every node with its ValueType, or throw TypecheckError listing
/// every offending node. The root must check to Boolean, Number or
/// TokenDist. Macro arguments are Program-valued and must themselves root a
/// Boolean subprogram.
void typecheck(Program& program, const SignatureTable& table);

/// parse + typecheck against the given table.
Program parse_typed(const std::string& text, const SignatureTable& table);

bool structurally_equal(const Program& a, const Program& b);

/// True for the modules whose scores come from a grounding provider.
bool is_learned_module(const std::string& canonical_name);

/// True for in-at-least-one-image / in-each-image / in-one-other-image.
bool is_macro_module(const std::string& canonical_name);

}  // namespace nmneval
