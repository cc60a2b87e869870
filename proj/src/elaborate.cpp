#include "fdctmc/lang.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <stdexcept>

namespace fdctmc::lang {

namespace {

constexpr std::size_t kMaxStates = 2'000'000;

struct EvalError {
    std::string message;
    int line, column;
};

struct EvalCtx {
    const std::map<std::string, double>* consts = nullptr;
    const std::vector<std::string>* varNames = nullptr; // null: variables disallowed
    const std::vector<int>* valuation = nullptr;
};

double eval(const Expr& e, const EvalCtx& ctx) {
    using K = Expr::Kind;
    auto bin = [&](auto op) { return op(eval(*e.lhs, ctx), eval(*e.rhs, ctx)); };
    switch (e.kind) {
        case K::Number: return e.number;
        case K::BoolLit: return e.boolValue ? 1.0 : 0.0;
        case K::Ident: {
            if (ctx.varNames) {
                auto it = std::find(ctx.varNames->begin(), ctx.varNames->end(), e.ident);
                if (it != ctx.varNames->end())
                    return (*ctx.valuation)[it - ctx.varNames->begin()];
            }
            auto c = ctx.consts->find(e.ident);
            if (c != ctx.consts->end()) return c->second;
            throw EvalError{ctx.varNames
                                ? "unknown identifier '" + e.ident + "'"
                                : "'" + e.ident + "' is not a constant (variables are only "
                                  "allowed in guards)",
                            e.line, e.column};
        }
        case K::Neg: return -eval(*e.lhs, ctx);
        case K::Not: return eval(*e.lhs, ctx) != 0.0 ? 0.0 : 1.0;
        case K::Add: return bin([](double a, double b) { return a + b; });
        case K::Sub: return bin([](double a, double b) { return a - b; });
        case K::Mul: return bin([](double a, double b) { return a * b; });
        case K::Div: {
            double d = eval(*e.rhs, ctx);
            if (d == 0.0) throw EvalError{"division by zero", e.line, e.column};
            return eval(*e.lhs, ctx) / d;
        }
        case K::Eq: return bin([](double a, double b) { return a == b ? 1.0 : 0.0; });
        case K::Ne: return bin([](double a, double b) { return a != b ? 1.0 : 0.0; });
        case K::Lt: return bin([](double a, double b) { return a < b ? 1.0 : 0.0; });
        case K::Le: return bin([](double a, double b) { return a <= b ? 1.0 : 0.0; });
        case K::Gt: return bin([](double a, double b) { return a > b ? 1.0 : 0.0; });
        case K::Ge: return bin([](double a, double b) { return a >= b ? 1.0 : 0.0; });
        case K::And: return bin([](double a, double b) { return a != 0.0 && b != 0.0 ? 1.0 : 0.0; });
        case K::Or: return bin([](double a, double b) { return a != 0.0 || b != 0.0 ? 1.0 : 0.0; });
    }
    throw EvalError{"bad expression", e.line, e.column};
}

int evalInt(const Expr& e, const EvalCtx& ctx, const char* what) {
    double v = eval(e, ctx);
    double r = std::round(v);
    if (std::abs(v - r) > 1e-9)
        throw EvalError{std::string(what) + " must be an integer", e.line, e.column};
    return static_cast<int>(r);
}

struct VarInfo {
    std::string name;
    int lo = 0, hi = 0, init = 0;
};

} // namespace

ElaborateResult elaborate(const Ast& ast) {
    ElaborateResult res;
    auto err = [&](std::string m, int line = 0) {
        res.diagnostics.push_back({Severity::Error, std::move(m),
                                   line > 0 ? std::optional<int>(line) : std::nullopt, {}});
    };
    auto warn = [&](std::string m, int line = 0) {
        res.diagnostics.push_back({Severity::Warning, std::move(m),
                                   line > 0 ? std::optional<int>(line) : std::nullopt, {}});
    };

    std::map<std::string, double> consts;
    EvalCtx constCtx{&consts, nullptr, nullptr};

    try {
        for (const auto& c : ast.consts) {
            if (consts.count(c.name)) {
                err("duplicate constant '" + c.name + "'", c.line);
                continue;
            }
            consts[c.name] = eval(*c.value, constCtx);
        }

        std::vector<VarInfo> vars;
        std::vector<std::string> varNames;
        for (const auto& m : ast.modules)
            for (const auto& v : m.vars) {
                if (std::count(varNames.begin(), varNames.end(), v.name) || consts.count(v.name)) {
                    err("duplicate variable '" + v.name + "'", v.line);
                    continue;
                }
                VarInfo info;
                info.name = v.name;
                info.lo = evalInt(*v.lo, constCtx, "range bound");
                info.hi = evalInt(*v.hi, constCtx, "range bound");
                info.init = evalInt(*v.init, constCtx, "initial value");
                if (info.lo > info.hi) err("empty range for variable '" + v.name + "'", v.line);
                if (info.init < info.lo || info.init > info.hi)
                    err("initial value of '" + v.name + "' outside its range", v.line);
                vars.push_back(info);
                varNames.push_back(v.name);
            }
        if (vars.empty()) err("model declares no variables");

        // fd event declarations; names are global in the elaborated model
        struct FdDecl {
            std::string name;
            double delay;
            int line;
            bool used = false;
        };
        std::vector<FdDecl> fdecls;
        auto fdIndex = [&](const std::string& n) -> int {
            for (std::size_t i = 0; i < fdecls.size(); ++i)
                if (fdecls[i].name == n) return static_cast<int>(i);
            return -1;
        };
        for (const auto& m : ast.modules)
            for (const auto& f : m.fdelays) {
                if (fdIndex(f.name) >= 0) {
                    err("duplicate fd event '" + f.name + "'", f.line);
                    continue;
                }
                fdecls.push_back({f.name, eval(*f.value, constCtx), f.line});
            }

        // flatten commands, resolving fd event references
        struct Cmd {
            const Command* cmd;
            int fdEvent; // -1 exponential
        };
        std::vector<Cmd> commands;
        for (const auto& m : ast.modules)
            for (const auto& c : m.commands) {
                int f = -1;
                if (c.fdEvent) {
                    f = fdIndex(*c.fdEvent);
                    if (f < 0) {
                        err("command references undeclared fd event '" + *c.fdEvent + "'", c.line);
                        continue;
                    }
                    fdecls[f].used = true;
                }
                commands.push_back({&c, f});
            }
        for (const auto& f : fdecls)
            if (!f.used) warn("fd event '" + f.name + "' is declared but never used", f.line);

        if (has_errors(res.diagnostics)) return res;

        using Valuation = std::vector<int>;
        Valuation initVal;
        for (const auto& v : vars) initVal.push_back(v.init);

        auto applyUpdate = [&](const Valuation& from, const Update& u, int line) {
            Valuation val = from;
            std::set<std::string> assigned;
            for (const auto& [name, expr] : u.assigns) {
                auto it = std::find(varNames.begin(), varNames.end(), name);
                if (it == varNames.end())
                    throw EvalError{"update assigns unknown variable '" + name + "'", line, 0};
                if (!assigned.insert(name).second)
                    throw EvalError{"update assigns variable '" + name + "' twice", line, 0};
                std::size_t idx = it - varNames.begin();
                int v = evalInt(*expr, constCtx, "update value");
                if (v < vars[idx].lo || v > vars[idx].hi)
                    throw EvalError{"update drives '" + name + "' out of its range", line, 0};
                val[idx] = v;
            }
            return val;
        };

        // reachability exploration from the initial valuation
        std::set<Valuation> reachable;
        std::deque<Valuation> frontier;
        reachable.insert(initVal);
        frontier.push_back(initVal);
        while (!frontier.empty()) {
            Valuation cur = frontier.front();
            frontier.pop_front();
            EvalCtx stateCtx{&consts, &varNames, &cur};
            for (const auto& [cmd, fdEvent] : commands) {
                if (eval(*cmd->guard, stateCtx) == 0.0) continue;
                double weightSum = 0.0;
                for (const auto& u : cmd->updates) {
                    double w = u.weight ? eval(*u.weight, constCtx) : 1.0;
                    if (w < 0.0)
                        throw EvalError{"negative update weight", cmd->line, 0};
                    weightSum += w;
                    if (w == 0.0) continue;
                    Valuation dest = applyUpdate(cur, u, cmd->line);
                    if (reachable.insert(dest).second) {
                        if (reachable.size() > kMaxStates)
                            throw EvalError{"state space exceeds limit", cmd->line, 0};
                        frontier.push_back(dest);
                    }
                }
                if (fdEvent >= 0 && std::abs(weightSum - 1.0) > kProbTol)
                    throw EvalError{"probabilities of fd command sum to " +
                                        std::to_string(weightSum) + ", have to sum to one",
                                    cmd->line, 0};
            }
        }

        // deterministic state ids: lexicographic order of reachable valuations
        std::vector<Valuation> states(reachable.begin(), reachable.end());
        std::sort(states.begin(), states.end());
        std::map<Valuation, StateId> id;
        for (std::size_t i = 0; i < states.size(); ++i) id[states[i]] = i;

        FdctmcModel model;
        model.numStates = states.size();
        model.rateMatrix = RateMatrix(states.size());
        model.initialState = id.at(initVal);
        model.rewards.rateReward.assign(states.size(), 0.0);
        model.metadata.variableNames = varNames;
        model.metadata.stateValuations = states;
        for (const auto& f : fdecls) {
            FdEvent ev;
            ev.name = f.name;
            ev.delay = f.delay;
            ev.priority = static_cast<int>(model.fdEvents.size()); // declaration order
            model.fdEvents.push_back(std::move(ev));
        }

        // transition construction; per command remember what it produced for
        // the impulse-reward pass
        struct Produced {
            StateId source;
            int event; // kExpEvent or fd index
            std::set<StateId> dests;
        };
        std::map<const Command*, std::vector<Produced>> produced;

        for (const auto& val : states) {
            StateId s = id.at(val);
            EvalCtx stateCtx{&consts, &varNames, &val};
            std::set<int> kernelSeen; // fd events with a kernel row at s
            for (const auto& [cmd, fdEvent] : commands) {
                if (eval(*cmd->guard, stateCtx) == 0.0) continue;
                Produced prod{s, fdEvent == -1 ? kExpEvent : fdEvent, {}};
                if (fdEvent == -1) {
                    for (const auto& u : cmd->updates) {
                        double w = u.weight ? eval(*u.weight, constCtx) : 1.0;
                        if (w <= 0.0) continue;
                        StateId d = id.at(applyUpdate(val, u, cmd->line));
                        model.rateMatrix.addRate(s, d, w);
                        prod.dests.insert(d);
                    }
                } else {
                    if (!kernelSeen.insert(fdEvent).second)
                        throw EvalError{"overlapping fd commands for event '" +
                                            fdecls[fdEvent].name + "' at state " +
                                            model.metadata.stateName(s),
                                        cmd->line, 0};
                    auto& ev = model.fdEvents[fdEvent];
                    ev.activeStates.insert(s);
                    Distribution row;
                    for (const auto& u : cmd->updates) {
                        double w = u.weight ? eval(*u.weight, constCtx) : 1.0;
                        if (w <= 0.0) continue;
                        StateId d = id.at(applyUpdate(val, u, cmd->line));
                        row.add(d, w);
                        prod.dests.insert(d);
                    }
                    ev.kernel[s] = std::move(row);
                }
                if (!prod.dests.empty()) produced[cmd].push_back(std::move(prod));
            }
        }

        // rewards
        for (const auto& item : ast.rewardItems) {
            double value = eval(*item.value, constCtx);
            if (value < 0.0) {
                err("negative reward value", item.line);
                continue;
            }
            if (!item.syncLabel) {
                for (const auto& val : states) {
                    EvalCtx stateCtx{&consts, &varNames, &val};
                    if (eval(*item.guard, stateCtx) != 0.0)
                        model.rewards.rateReward[id.at(val)] += value;
                }
            } else {
                // one contribution per matched transition, however many
                // commands generate it
                std::set<std::tuple<StateId, int, StateId>> matched;
                for (const auto& [cmd, fdEvent] : commands) {
                    bool match = cmd->syncLabel ? *item.syncLabel == *cmd->syncLabel
                                                : item.syncLabel->empty();
                    if (!match) continue;
                    auto it = produced.find(cmd);
                    if (it == produced.end()) continue;
                    for (const auto& p : it->second) {
                        EvalCtx stateCtx{&consts, &varNames, &states[p.source]};
                        if (eval(*item.guard, stateCtx) == 0.0) continue;
                        for (StateId d : p.dests) matched.insert({p.source, p.event, d});
                    }
                }
                for (const auto& t : matched) model.rewards.impulseReward[t] += value;
            }
        }

        // labels; "target" defines the target set
        std::set<std::string> labelNames;
        for (const auto& l : ast.labels) {
            if (!labelNames.insert(l.name).second) {
                err("duplicate label \"" + l.name + "\"", l.line);
                continue;
            }
            if (l.name != "target") continue;
            for (const auto& val : states) {
                EvalCtx stateCtx{&consts, &varNames, &val};
                if (eval(*l.guard, stateCtx) != 0.0) model.target.states.insert(id.at(val));
            }
        }

        if (!has_errors(res.diagnostics)) res.model = std::move(model);
    } catch (const EvalError& e) {
        err(e.message, e.line);
    }
    return res;
}

} // namespace fdctmc::lang
