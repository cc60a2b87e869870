#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fdctmc/diagnostics.hpp"
#include "fdctmc/model.hpp"

namespace fdctmc::lang {

// Expression tree shared by guards, constant definitions and update values.
// Boolean operators treat nonzero as true; comparisons yield 0/1.
struct Expr {
    enum class Kind {
        Number, Ident, BoolLit,
        Neg, Not,
        Add, Sub, Mul, Div,
        Eq, Ne, Lt, Le, Gt, Ge,
        And, Or
    };
    Kind kind = Kind::Number;
    double number = 0.0;
    bool boolValue = false;
    std::string ident;
    std::unique_ptr<Expr> lhs, rhs;
    int line = 0, column = 0;

    std::string render() const;
};

using ExprPtr = std::unique_ptr<Expr>;

struct ConstDecl {
    std::string name;
    ExprPtr value;
    int line = 0;
};

struct FdelayDecl {
    std::string name;
    ExprPtr value;
    int line = 0;
};

struct VarDecl {
    std::string name;
    ExprPtr lo, hi, init;
    int line = 0;
};

struct Update {
    ExprPtr weight; // rate or probability; null means 1
    std::vector<std::pair<std::string, ExprPtr>> assigns; // empty = identity
};

struct Command {
    std::optional<std::string> syncLabel; // nullopt = no brackets content
    ExprPtr guard;
    std::optional<std::string> fdEvent; // nullopt = exponential
    std::vector<Update> updates;
    int line = 0;
};

struct Module {
    std::string name;
    std::vector<FdelayDecl> fdelays;
    std::vector<VarDecl> vars;
    std::vector<Command> commands;
};

struct LabelDecl {
    std::string name; // quoted string contents
    ExprPtr guard;
    int line = 0;
};

// Unlabelled items are rate rewards; `[L]` items impose impulses on the
// transitions of commands synchronising on L (empty L matches unlabelled
// commands).
struct RewardItem {
    std::optional<std::string> syncLabel;
    ExprPtr guard;
    ExprPtr value;
    int line = 0;
};

struct Ast {
    std::vector<ConstDecl> consts;
    std::vector<Module> modules;
    std::vector<LabelDecl> labels;
    std::vector<RewardItem> rewardItems;
};

struct ParseResult {
    std::optional<Ast> ast;
    std::vector<Diagnostic> diagnostics;
    bool ok() const { return ast.has_value() && !has_errors(diagnostics); }
};

ParseResult parse(const std::string& source);

struct ElaborateResult {
    std::optional<FdctmcModel> model;
    std::vector<Diagnostic> diagnostics;
    bool ok() const { return model.has_value() && !has_errors(diagnostics); }
};

ElaborateResult elaborate(const Ast& ast);

// Convenience: parse + elaborate, merging diagnostics.
ElaborateResult loadModel(const std::string& source);

// Canonical flat re-serialization: one state variable, one command per
// state/event, impulse rewards expressed through generated sync labels.
// Re-elaborating the output reproduces the model exactly (state ids
// included). Throws std::invalid_argument for fd impulse rows that vary by
// destination, which the reward syntax cannot express.
std::string exportModel(const FdctmcModel& model);

} // namespace fdctmc::lang
