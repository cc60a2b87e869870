#include "fdctmc/reward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fdctmc/graph.hpp"

namespace fdctmc {

FdStepContext makeFdStepContext(const FdctmcModel& model, int eventIndex) {
    FdStepContext ctx;
    ctx.sub = buildSubordinatedChain(model, eventIndex);
    ctx.chain = uniformize(ctx.sub, model);

    auto it = ctx.sub.localIndex.find(ctx.sub.settingState);
    if (it == ctx.sub.localIndex.end() || !ctx.sub.isRegionLocal(it->second))
        throw std::invalid_argument("setting state of fd event '" +
                                    model.fdEvents[eventIndex].name +
                                    "' is not part of its active region");
    ctx.startLocal = it->second;

    const auto& ev = model.fdEvents[eventIndex];
    ctx.fireRows.resize(ctx.sub.regionStates.size());
    for (std::size_t i = 0; i < ctx.sub.regionStates.size(); ++i) {
        StateId s = ctx.sub.regionStates[i];
        const auto& row = ev.kernel.at(s);
        for (const auto& [d, p] : row.entries())
            ctx.fireRows[i].emplace_back(d, p, model.rewards.impulse(s, eventIndex, d));
    }

    // reachable part of the region from the setting state
    std::vector<bool> seen(ctx.sub.numLocal(), false);
    std::vector<std::size_t> stack{ctx.startLocal};
    seen[ctx.startLocal] = true;
    while (!stack.empty()) {
        std::size_t i = stack.back();
        stack.pop_back();
        if (!ctx.sub.isRegionLocal(i)) continue;
        for (const auto& [k, r] : ctx.sub.regionRates[i])
            if (!seen[k]) {
                seen[k] = true;
                stack.push_back(k);
            }
    }
    std::set<StateId> support;
    for (std::size_t i = 0; i < ctx.sub.numLocal(); ++i) {
        if (!seen[i]) continue;
        if (ctx.sub.isRegionLocal(i)) {
            for (const auto& [d, p, imp] : ctx.fireRows[i]) support.insert(d);
        } else {
            support.insert(ctx.sub.exitStates[i - ctx.sub.regionStates.size()]);
        }
    }
    ctx.support.assign(support.begin(), support.end());
    return ctx;
}

StepKernel fdStepFromTransient(const FdStepContext& ctx, const TransientState& ts, double delay) {
    StepKernel k;
    k.kind = StepKernel::Kind::FdStep;
    k.source = ctx.sub.settingState;
    k.event = ctx.sub.eventIndex;
    k.delay = delay;

    double reward = ts.accumulatedReward;
    std::map<StateId, double> trans;
    const std::size_t numRegion = ctx.sub.regionStates.size();
    for (std::size_t i = 0; i < ts.pi.size(); ++i) {
        double mass = ts.pi[i];
        if (mass <= 0.0) continue;
        if (i < numRegion) {
            for (const auto& [d, p, imp] : ctx.fireRows[i]) {
                trans[d] += mass * p;
                reward += mass * p * imp;
            }
        } else {
            trans[ctx.sub.exitStates[i - numRegion]] += mass;
        }
    }
    for (const auto& [d, p] : trans) k.transitions.add(d, p);
    k.expectedReward = reward;
    return k;
}

StepKernel buildExpStep(const FdctmcModel& model, StateId state) {
    StepKernel k;
    k.kind = StepKernel::Kind::ExpStep;
    k.source = state;
    k.event = kExpEvent;

    double exitRate = model.rateMatrix.exitRate(state);
    if (!(exitRate > 0.0))
        throw std::invalid_argument("state " + model.metadata.stateName(state) +
                                    " has no exponential transitions and no fd event (deadlock)");
    double reward = model.rewards.rateReward[state] / exitRate;
    for (const auto& [d, r] : model.rateMatrix.row(state)) {
        double p = r / exitRate;
        k.transitions.add(d, p);
        reward += p * model.rewards.impulse(state, kExpEvent, d);
    }
    k.expectedReward = reward;
    return k;
}

namespace {

int activeEvent(const FdctmcModel& model, StateId s) {
    for (std::size_t f = 0; f < model.fdEvents.size(); ++f)
        if (model.fdEvents[f].activeStates.count(s)) return static_cast<int>(f);
    return -1;
}

} // namespace

StepKernel buildStepKernel(const FdctmcModel& model, StateId state,
                           std::optional<double> delayOverride, double kappa) {
    int f = activeEvent(model, state);
    if (f < 0) {
        if (delayOverride)
            throw std::invalid_argument("delay override on a state without an fd event");
        return buildExpStep(model, state);
    }
    auto ctx = makeFdStepContext(model, f);
    if (ctx.sub.settingState != state)
        throw std::invalid_argument("state " + model.metadata.stateName(state) +
                                    " is not the setting state of its active fd event");
    double delay = delayOverride.value_or(model.fdEvents[f].delay);
    if (!(delay > 0.0)) throw std::invalid_argument("fd delay must be positive");
    TransientWalker walker(ctx.chain, ctx.startLocal, delay, 1, kappa);
    return fdStepFromTransient(ctx, walker.advance(), delay);
}

std::set<StateId> infiniteRewardStates(const std::vector<std::optional<StepKernel>>& kernels,
                                       const TargetSet& target, std::size_t numStates) {
    std::vector<std::vector<std::vector<std::size_t>>> supports(numStates);
    std::vector<bool> isTarget(numStates, false);
    for (StateId t : target.states) isTarget[t] = true;
    for (StateId s = 0; s < numStates; ++s) {
        if (isTarget[s] || !kernels[s]) continue;
        std::vector<std::size_t> sup;
        for (const auto& [d, p] : kernels[s]->transitions.entries()) sup.push_back(d);
        supports[s].push_back(std::move(sup));
    }
    auto ok = prob1eStates(supports, isTarget);
    std::set<StateId> infinite;
    for (StateId s = 0; s < numStates; ++s)
        if (!ok[s]) infinite.insert(s);
    return infinite;
}

ExpectedRewardResult expectedReward(const FdctmcModel& model, double epsilonSolve,
                                    std::uint64_t productBudget) {
    if (!(epsilonSolve > 0.0)) throw std::invalid_argument("epsilonSolve must be positive");
    if (model.target.states.empty())
        throw std::invalid_argument("expected reward needs a non-empty target set");

    auto restrictions = validateSynthesisRestrictions(model, /*includeRewardRestrictions=*/false);
    if (!restrictions.ok()) {
        std::string msg = "model violates the expected-reward restrictions:";
        for (const auto& d : restrictions.diagnostics) msg += "\n  " + d.render();
        throw std::invalid_argument(msg);
    }

    // kernels: half the budget to transient truncation (split across fd
    // events), half to the linear-solve residual
    const double kernelKappa =
        epsilonSolve / 2.0 / static_cast<double>(std::max<std::size_t>(1, model.fdEvents.size()));
    const double solveResidual = epsilonSolve / 2.0;

    std::vector<std::optional<StepKernel>> kernels(model.numStates);
    std::vector<bool> interior(model.numStates, false); // region states that are
                                                        // not setting states; they
                                                        // never carry step mass
    for (StateId s = 0; s < model.numStates; ++s) {
        if (model.target.contains(s)) continue;
        int f = activeEvent(model, s);
        if (f >= 0) {
            if (restrictions.settingStates.at(f) != s) {
                interior[s] = true;
                continue;
            }
            auto ctx = makeFdStepContext(model, f);
            TransientWalker walker(ctx.chain, ctx.startLocal, model.fdEvents[f].delay, 1,
                                   kernelKappa, productBudget);
            kernels[s] = fdStepFromTransient(ctx, walker.advance(), model.fdEvents[f].delay);
        } else if (model.rateMatrix.exitRate(s) > 0.0) {
            kernels[s] = buildExpStep(model, s);
        } // deadlock states stay kernel-less and fall into the infinite set
    }

    ExpectedRewardResult res;
    res.infiniteStates = infiniteRewardStates(kernels, model.target, model.numStates);
    for (StateId s = 0; s < model.numStates; ++s)
        if (interior[s]) res.infiniteStates.erase(s);

    // Gauss-Seidel on x = r + P x over finite, non-target decision states
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> x(model.numStates, 0.0);
    for (StateId s : res.infiniteStates) x[s] = inf;
    for (StateId s = 0; s < model.numStates; ++s)
        if (interior[s]) x[s] = std::numeric_limits<double>::quiet_NaN();

    std::vector<StateId> solveStates;
    for (StateId s = 0; s < model.numStates; ++s)
        if (kernels[s] && !model.target.contains(s) && !res.infiniteStates.count(s))
            solveStates.push_back(s);

    const std::size_t maxIterations = 2'000'000;
    double residual = inf;
    std::size_t iter = 0;
    while (iter < maxIterations) {
        ++iter;
        residual = 0.0;
        for (StateId s : solveStates) {
            const auto& k = *kernels[s];
            double v = k.expectedReward;
            for (const auto& [d, p] : k.transitions.entries()) v += p * x[d];
            residual = std::max(residual, std::abs(v - x[s]));
            x[s] = v;
        }
        if (residual <= solveResidual) break;
    }
    if (residual > solveResidual)
        throw std::runtime_error("expected reward solve did not reach residual " +
                                 std::to_string(solveResidual) + " within " +
                                 std::to_string(maxIterations) + " sweeps (residual " +
                                 std::to_string(residual) + ")");

    res.perStateValues = std::move(x);
    res.residual = residual;
    res.iterations = iter;
    res.value = res.perStateValues[model.initialState];
    return res;
}

} // namespace fdctmc
