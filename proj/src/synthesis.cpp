#include "fdctmc/synthesis.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fdctmc/graph.hpp"

namespace fdctmc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int activeEvent(const FdctmcModel& model, StateId s) {
    for (std::size_t f = 0; f < model.fdEvents.size(); ++f)
        if (model.fdEvents[f].activeStates.count(s)) return static_cast<int>(f);
    return -1;
}

double toMs(std::chrono::steady_clock::duration d) {
    return std::chrono::duration<double, std::milli>(d).count();
}

} // namespace

MdpStructure analyzeMdpStructure(const FdctmcModel& model) {
    auto restrictions = validateSynthesisRestrictions(model, /*includeRewardRestrictions=*/false);
    if (!restrictions.ok()) {
        std::string msg = "model violates restrictions R1/R2:";
        for (const auto& d : restrictions.diagnostics) msg += "\n  " + d.render();
        throw std::invalid_argument(msg);
    }

    MdpStructure st;
    st.settingStates = restrictions.settingStates;

    double minExpStep = kInf;
    for (StateId s = 0; s < model.numStates; ++s) {
        if (model.target.contains(s)) {
            ++st.decisionStateCount;
            continue;
        }
        int f = activeEvent(model, s);
        if (f >= 0) {
            if (st.settingStates.at(f) == s) ++st.decisionStateCount;
            continue; // interior region states are not decision states
        }
        double exitRate = model.rateMatrix.exitRate(s);
        if (exitRate > 0.0) {
            st.expDecisionStates.push_back(s);
            ++st.decisionStateCount;
            minExpStep = std::min(minExpStep, model.rewards.rateReward[s] / exitRate);
        } else {
            st.deadlockStates.push_back(s);
            ++st.decisionStateCount;
        }
    }

    double minFdImpulse = kInf;
    for (std::size_t f = 0; f < model.fdEvents.size(); ++f)
        for (const auto& [s, dist] : model.fdEvents[f].kernel)
            for (const auto& [d, p] : dist.entries())
                minFdImpulse =
                    std::min(minFdImpulse, model.rewards.impulse(s, static_cast<int>(f), d));

    st.minOneStepReward = std::min(minExpStep, minFdImpulse);
    return st;
}

namespace {

DiscretizationBounds computeBoundsWith(const FdctmcModel& model, int eventIndex, double epsilon,
                                       double valUpper, const MdpStructure& st) {
    if (!std::isfinite(valUpper))
        throw std::invalid_argument(
            "synthesis needs a finite expected reward at the declared delays; "
            "specify better initial delays");
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");

    auto sub = buildSubordinatedChain(model, eventIndex);
    if (!(sub.minP > 0.0)) throw std::invalid_argument("minimal branching probability is zero");
    if (!(sub.minR > 0.0))
        throw std::invalid_argument("fd event '" + model.fdEvents[eventIndex].name +
                                    "' has a zero rate reward in its region (R3)");
    if (!(st.minOneStepReward > 0.0) || !std::isfinite(st.minOneStepReward))
        throw std::invalid_argument("minimal one-step reward bound is degenerate");

    DiscretizationBounds b;
    b.eventIndex = eventIndex;
    b.eventName = model.fdEvents[eventIndex].name;
    b.epsilon = epsilon;
    b.valUpper = valUpper;
    b.lambda = sub.lambda;
    b.minP = sub.minP;
    b.minR = sub.minR;
    b.maxR = sub.maxR;
    b.sizeFd = sub.sizeFd;
    b.minOneStepReward = st.minOneStepReward;
    b.decisionStateCount = st.decisionStateCount;

    const double nStates = static_cast<double>(st.decisionStateCount);
    b.boundSteps = valUpper / st.minOneStepReward;
    b.alpha = std::min(epsilon / (b.boundSteps * (1.0 + valUpper) * nStates),
                       1.0 / (2.0 * b.boundSteps * nStates));
    b.d1 = std::max(2.0 * sub.lambda, 1.0 * (sub.lambda + 1.0) * sub.maxR);
    b.rawStep = b.alpha / b.d1;
    b.upperDelay = std::max(valUpper / (std::pow(sub.minP, static_cast<double>(sub.sizeFd)) * sub.minR),
                            std::exp(1.0) * std::abs(std::log(b.alpha / 2.0)) /
                                (sub.lambda * sub.minP));

    // round the step down so the grid covers upperDelay exactly
    b.gridCount = static_cast<std::size_t>(std::ceil(b.upperDelay / b.rawStep));
    if (b.gridCount == 0) b.gridCount = 1;
    b.step = b.upperDelay / static_cast<double>(b.gridCount);
    b.kappa = epsilon * b.step * sub.minR / (2.0 * nStates * (1.0 + valUpper));
    return b;
}

} // namespace

DiscretizationBounds computeBounds(const FdctmcModel& model, int eventIndex, double epsilon,
                                   double valUpper) {
    return computeBoundsWith(model, eventIndex, epsilon, valUpper, analyzeMdpStructure(model));
}

DiscretizedMdp buildDiscretizedMdp(const FdctmcModel& model,
                                   const std::vector<DiscretizationBounds>& bounds,
                                   std::uint64_t productBudget, bool tryPrecomputedStep) {
    auto st = analyzeMdpStructure(model);

    DiscretizedMdp mdp;
    mdp.numStates = model.numStates;
    mdp.initialState = model.initialState;
    mdp.isTarget.assign(model.numStates, false);
    for (StateId t : model.target.states) mdp.isTarget[t] = true;
    mdp.expActions.resize(model.numStates);
    mdp.familyOfState.assign(model.numStates, -1);

    for (StateId s : st.expDecisionStates) mdp.expActions[s] = buildExpStep(model, s);

    for (const auto& b : bounds) {
        FdActionFamily fam;
        fam.bounds = b;
        fam.ctx = makeFdStepContext(model, b.eventIndex);
        // one sweep per family and VI pass; J is fixed by kappa and K
        TransientWalker probe(fam.ctx.chain, fam.ctx.startLocal, b.step, b.gridCount, b.kappa,
                              productBudget);
        mdp.plannedProductsPerSweep += probe.productsPlanned();
        if (tryPrecomputedStep) {
            auto plan = poissonTruncation(fam.ctx.chain.lambda * b.step,
                                          b.kappa / static_cast<double>(b.gridCount));
            auto pre = precomputeStep(fam.ctx.chain, b.step, plan);
            // fill-in gate: the summed matrix only pays off while sparse
            if (pre.density < 0.25) fam.precomputed = std::move(pre);
        }
        mdp.familyOfState[st.settingStates.at(b.eventIndex)] =
            static_cast<int>(mdp.families.size());
        mdp.families.push_back(std::move(fam));
    }

    // qualitative precomputation: keep states from which some policy reaches
    // the target almost surely
    std::vector<std::vector<std::vector<std::size_t>>> supports(model.numStates);
    for (StateId s = 0; s < model.numStates; ++s) {
        if (mdp.isTarget[s]) continue;
        if (mdp.expActions[s]) {
            std::vector<std::size_t> sup;
            for (const auto& [d, p] : mdp.expActions[s]->transitions.entries()) sup.push_back(d);
            supports[s].push_back(std::move(sup));
        } else if (mdp.familyOfState[s] >= 0) {
            // every delay action shares the same mathematical support
            const auto& fam = mdp.families[mdp.familyOfState[s]];
            supports[s].push_back(
                std::vector<std::size_t>(fam.ctx.support.begin(), fam.ctx.support.end()));
        }
    }
    mdp.kept = prob1eStates(supports, mdp.isTarget);
    return mdp;
}

std::vector<StepKernel> materializeActions(const FdActionFamily& family,
                                           std::uint64_t productBudget) {
    const auto& b = family.bounds;
    TransientWalker walker(family.ctx.chain, family.ctx.startLocal, b.step, b.gridCount, b.kappa,
                           productBudget);
    std::vector<StepKernel> actions;
    actions.reserve(b.gridCount);
    for (std::size_t i = 1; i <= b.gridCount; ++i)
        actions.push_back(
            fdStepFromTransient(family.ctx, walker.advance(), static_cast<double>(i) * b.step));
    return actions;
}

namespace {

// Streamed best action of one family under the current value vector:
// q_i = accumulatedReward_i + pi_i . c, where c folds exit values and
// kernel-plus-impulse values of the region states.
struct FamilyEvaluation {
    double bestQ = kInf;
    std::size_t bestAction = 0; // 1-based grid index
};

FamilyEvaluation evaluateFamily(const FdActionFamily& family, const std::vector<double>& values,
                                std::vector<double>& c, std::uint64_t productBudget,
                                std::uint64_t& products) {
    const auto& ctx = family.ctx;
    const std::size_t numRegion = ctx.sub.regionStates.size();
    c.assign(ctx.chain.numStates, 0.0);
    for (std::size_t i = 0; i < numRegion; ++i) {
        double v = 0.0;
        bool finite = true;
        for (const auto& [d, p, imp] : ctx.fireRows[i]) {
            if (!std::isfinite(values[d])) { finite = false; break; }
            v += p * (imp + values[d]);
        }
        // an infinite destination implies this region state is unreachable
        // from the setting state (otherwise the state would not be kept),
        // so its mass is exactly zero and the coefficient is irrelevant
        c[i] = finite ? v : 0.0;
    }
    for (std::size_t e = numRegion; e < ctx.chain.numStates; ++e) {
        double v = values[ctx.sub.exitStates[e - numRegion]];
        c[e] = std::isfinite(v) ? v : 0.0;
    }

    if (family.precomputed) {
        PrecomputedWalker w(ctx.chain, *family.precomputed, ctx.startLocal, family.bounds.step);
        FamilyEvaluation eval;
        for (std::size_t i = 1; i <= family.bounds.gridCount; ++i) {
            const auto& ts = w.advance();
            double q = ts.accumulatedReward;
            for (std::size_t k = 0; k < ts.pi.size(); ++k) q += ts.pi[k] * c[k];
            if (q < eval.bestQ) {
                eval.bestQ = q;
                eval.bestAction = i;
            }
        }
        products += w.productsDone();
        return eval;
    }
    auto r = sweepMinimize(ctx.chain, ctx.startLocal, family.bounds.step, family.bounds.gridCount,
                           family.bounds.kappa, c.data(), productBudget, products);
    return {r.bestQ, r.bestAction};
}

} // namespace

namespace {

// Exact expected total reward of one stationary policy on the kept states,
// by dense LU on (I - P). The decision chains are small, and elimination
// copes with the near-singular systems that myopic interim policies produce
// (cycles leaking to the target with probability O(delta)), where iterative
// solves would crawl.
void evaluatePolicy(const DiscretizedMdp& mdp,
                    const std::vector<std::optional<StepKernel>>& policyKernels,
                    std::vector<double>& values) {
    std::vector<StateId> solveStates;
    for (std::size_t s = 0; s < mdp.numStates; ++s)
        if (mdp.kept[s] && !mdp.isTarget[s] && policyKernels[s]) solveStates.push_back(s);
    const std::size_t n = solveStates.size();
    if (n == 0) return;
    std::vector<std::size_t> pos(mdp.numStates, n);
    for (std::size_t i = 0; i < n; ++i) pos[solveStates[i]] = i;

    std::vector<double> a(n * (n + 1), 0.0); // augmented [I - P | r]
    for (std::size_t i = 0; i < n; ++i) {
        const auto& k = *policyKernels[solveStates[i]];
        a[i * (n + 1) + i] = 1.0;
        for (const auto& [d, p] : k.transitions.entries())
            if (pos[d] < n) a[i * (n + 1) + pos[d]] -= p;
        a[i * (n + 1) + n] = k.expectedReward;
    }
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * (n + 1) + col]) > std::abs(a[pivot * (n + 1) + col])) pivot = r;
        if (a[pivot * (n + 1) + col] == 0.0)
            throw std::runtime_error("policy evaluation system is singular");
        if (pivot != col)
            for (std::size_t j = col; j <= n; ++j)
                std::swap(a[pivot * (n + 1) + j], a[col * (n + 1) + j]);
        for (std::size_t r = col + 1; r < n; ++r) {
            double f = a[r * (n + 1) + col] / a[col * (n + 1) + col];
            if (f == 0.0) continue;
            for (std::size_t j = col; j <= n; ++j) a[r * (n + 1) + j] -= f * a[col * (n + 1) + j];
        }
    }
    for (std::size_t i = n; i-- > 0;) {
        double v = a[i * (n + 1) + n];
        for (std::size_t j = i + 1; j < n; ++j) v -= a[i * (n + 1) + j] * values[solveStates[j]];
        values[solveStates[i]] = v / a[i * (n + 1) + i];
    }
}

} // namespace

MdpSolution solveMdp(const DiscretizedMdp& mdp, double convergence, std::size_t maxIterations,
                     std::uint64_t productBudget) {
    if (!(convergence > 0.0)) throw std::invalid_argument("convergence must be positive");

    MdpSolution sol;
    sol.values.assign(mdp.numStates, kInf);
    for (std::size_t s = 0; s < mdp.numStates; ++s)
        if (mdp.kept[s]) sol.values[s] = 0.0;

    std::vector<double> c;
    auto sweep = [&](bool updateValues, std::map<StateId, std::size_t>* policyOut) {
        double diff = 0.0;
        for (std::size_t s = 0; s < mdp.numStates; ++s) {
            if (mdp.isTarget[s] || !mdp.kept[s]) continue;
            double q;
            if (mdp.expActions[s]) {
                const auto& k = *mdp.expActions[s];
                q = k.expectedReward;
                for (const auto& [d, p] : k.transitions.entries()) q += p * sol.values[d];
            } else if (mdp.familyOfState[s] >= 0) {
                int fi = mdp.familyOfState[s];
                auto eval = evaluateFamily(mdp.families[fi], sol.values, c, productBudget,
                                           sol.products);
                q = eval.bestQ;
                if (policyOut) (*policyOut)[s] = eval.bestAction;
            } else {
                continue; // kept state without actions cannot occur
            }
            diff = std::max(diff, std::abs(q - sol.values[s]));
            if (updateValues) sol.values[s] = q;
        }
        return diff;
    };

    // Greedy sweeps accelerated by exact evaluation of the interim policy:
    // a sweep both improves the values in place and records its greedy
    // action per state, then the induced chain is solved exactly. Once the
    // policy is stable the sweep diff collapses to the evaluation residual,
    // which satisfies the successive-sweep stopping rule directly.
    double diff = kInf;
    std::map<StateId, std::size_t> lastGreedy;
    while (sol.iterations < maxIterations) {
        ++sol.iterations;
        std::map<StateId, std::size_t> greedy;
        diff = sweep(true, &greedy);
        lastGreedy = greedy;
#ifdef FDCTMC_SOLVE_TRACE
        std::fprintf(stderr, "sweep %zu diff=%.6e\n", sol.iterations, diff);
#endif
        if (diff <= convergence) break;

        std::vector<std::optional<StepKernel>> policyKernels(mdp.numStates);
        for (std::size_t s = 0; s < mdp.numStates; ++s) {
            if (mdp.isTarget[s] || !mdp.kept[s]) continue;
            if (mdp.expActions[s]) {
                policyKernels[s] = *mdp.expActions[s];
            } else if (mdp.familyOfState[s] >= 0) {
                const auto& fam = mdp.families[mdp.familyOfState[s]];
                std::size_t action = greedy.at(s);
                // the kernel must come from the same sweep arithmetic (same
                // J) as the streamed action values, otherwise the sweep diff
                // bottoms out at the kernel precision instead of converging
                if (fam.precomputed) {
                    PrecomputedWalker w(fam.ctx.chain, *fam.precomputed, fam.ctx.startLocal,
                                        fam.bounds.step);
                    for (std::size_t i = 1; i < action; ++i) w.advance();
                    policyKernels[s] = fdStepFromTransient(
                        fam.ctx, w.advance(), static_cast<double>(action) * fam.bounds.step);
                    sol.products += w.productsDone();
                } else {
                    TransientWalker walker(fam.ctx.chain, fam.ctx.startLocal, fam.bounds.step,
                                           fam.bounds.gridCount, fam.bounds.kappa, productBudget);
                    for (std::size_t i = 1; i < action; ++i) walker.advance();
                    policyKernels[s] = fdStepFromTransient(
                        fam.ctx, walker.advance(), static_cast<double>(action) * fam.bounds.step);
                    sol.products += walker.productsDone();
                }
            }
        }
        evaluatePolicy(mdp, policyKernels, sol.values);
    }
    if (diff > convergence)
        throw std::runtime_error("value iteration did not converge to " +
                                 std::to_string(convergence) + " within " +
                                 std::to_string(maxIterations) + " sweeps");

    // the converged sweep's greedy choices are the policy
    sol.policy = std::move(lastGreedy);
    return sol;
}

SynthesisResult synthesize(const FdctmcModel& model, double epsilon,
                           std::uint64_t productBudget, std::size_t maxIterations,
                           bool tryPrecomputedStep) {
    if (!(epsilon > 0.0) || !(epsilon < 1.0))
        throw std::invalid_argument("epsilon must lie in (0,1)");

    auto restrictions = validateSynthesisRestrictions(model, /*includeRewardRestrictions=*/true);
    if (!restrictions.ok()) {
        std::string msg = "model violates the synthesis restrictions:";
        for (const auto& d : restrictions.diagnostics) msg += "\n  " + d.render();
        throw std::invalid_argument(msg);
    }

    using clock = std::chrono::steady_clock;
    SynthesisResult res;
    res.epsilon = epsilon;

    // upper bound: expected reward at the declared delays
    auto t0 = clock::now();
    auto valRes = expectedReward(model, epsilon / 10.0, productBudget);
    if (!std::isfinite(valRes.value))
        throw std::invalid_argument(
            "expected reward at the declared delays is infinite; synthesis needs finite "
            "initial delays (specify better delays for the fd events)");
    res.valUpper = valRes.value + valRes.residual;

    if (model.fdEvents.empty()) {
        res.value = valRes.value;
        res.mdpValue = valRes.value;
        res.verification = std::move(valRes);
        return res;
    }

    const double perEventEpsilon = epsilon / static_cast<double>(model.fdEvents.size());
    auto st = analyzeMdpStructure(model);
    for (std::size_t f = 0; f < model.fdEvents.size(); ++f)
        res.perEventBounds.push_back(
            computeBoundsWith(model, static_cast<int>(f), perEventEpsilon, res.valUpper, st));
    res.msBounds = toMs(clock::now() - t0);

    t0 = clock::now();
    auto mdp = buildDiscretizedMdp(model, res.perEventBounds, productBudget, tryPrecomputedStep);
    if (!mdp.kept[model.initialState])
        throw std::runtime_error("no policy reaches the target almost surely from the initial state");

    double kappaMin = kInf;
    for (const auto& b : res.perEventBounds) kappaMin = std::min(kappaMin, b.kappa);
    auto sol = solveMdp(mdp, kappaMin / 10.0, maxIterations, productBudget);
    res.mdpValue = sol.values[model.initialState];
    res.iterations = sol.iterations;
    res.msSolve = toMs(clock::now() - t0);

    t0 = clock::now();
    std::map<std::string, double> delays;
    for (const auto& b : res.perEventBounds) {
        StateId setting = st.settingStates.at(b.eventIndex);
        auto it = sol.policy.find(setting);
        std::size_t action = it != sol.policy.end() ? it->second : 1;
        delays[b.eventName] = static_cast<double>(action) * b.step;
    }
    res.delays = delays;

    res.verification = expectedReward(applyDelays(model, delays), epsilon / 10.0, productBudget);
    res.value = res.verification.value;
    res.msVerify = toMs(clock::now() - t0);
    return res;
}

} // namespace fdctmc
