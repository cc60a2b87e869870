#include <doctest.h>

#include <cmath>
#include <random>

#include "fdctmc/graph.hpp"
#include "fdctmc/reward.hpp"
#include "fdctmc/synthesis.hpp"
#include "helpers.hpp"

using namespace fdctmc;
using testutil::loadBundled;
using testutil::loadSource;

namespace {

// realizes the hand-evaluated bounds instance: one region state with rate
// reward 1 exiting to the target at rate 1, fd impulse 0.5
FdctmcModel boundsToy() {
    return loadSource(R"(fdctmc
module m
  fdelay f = 1.0;
  s : [0..1] init 0;
  [] s=0 -> 1.0:(s'=1);
  [a] s=0 --f-> 1.0:(s'=1);
endmodule
label "target" = s=1;
rewards
  s=0 : 1.0;
  s=1 : 1.0;
  [a] true : 0.5;
endrewards
)");
}

DiscretizationBounds handBounds(const FdctmcModel& m, int event, std::size_t k, double step,
                                double kappa) {
    DiscretizationBounds b;
    b.eventIndex = event;
    b.eventName = m.fdEvents[event].name;
    b.gridCount = k;
    b.step = step;
    b.upperDelay = k * step;
    b.kappa = kappa;
    return b;
}

} // namespace

TEST_CASE("decision structure of the discretized MDP") {
    auto m = loadBundled("dpm2.fdctmc");
    auto st = analyzeMdpStructure(m);
    // setting states of f1 and f2, the two busy states, and the target
    CHECK(st.decisionStateCount == 5);
    CHECK(st.expDecisionStates.size() == 2);
    CHECK(st.deadlockStates.empty());
    // min over exp states of R(s)/E(s) is busy: 2.15/13.89; the fd impulse
    // 0.006 is smaller still
    CHECK(st.minOneStepReward == doctest::Approx(0.006));
}

TEST_CASE("appendix formulas evaluate exactly as hand-computed on the toy") {
    auto m = boundsToy();
    auto sub = buildSubordinatedChain(m, 0);
    REQUIRE(sub.lambda == doctest::Approx(1.0));
    REQUIRE(sub.minP == doctest::Approx(1.0));
    REQUIRE(sub.minR == doctest::Approx(1.0));
    REQUIRE(sub.maxR == doctest::Approx(1.0));
    REQUIRE(sub.sizeFd == 1);
    auto st = analyzeMdpStructure(m);
    REQUIRE(st.decisionStateCount == 2);
    REQUIRE(st.minOneStepReward == doctest::Approx(0.5));

    auto b = computeBounds(m, 0, 0.1, 1.0);
    CHECK(b.boundSteps == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(b.alpha == doctest::Approx(0.0125).epsilon(1e-15));
    CHECK(b.d1 == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(b.rawStep == doctest::Approx(0.00625).epsilon(1e-15));
    CHECK(b.upperDelay == doctest::Approx(13.795752758221274).epsilon(1e-13));
    CHECK(b.gridCount == 2208);
    CHECK(b.step == doctest::Approx(0.0062480764303538385).epsilon(1e-13));
    CHECK(b.kappa == doctest::Approx(7.810095537942298e-05).epsilon(1e-13));
    // grid covers the upper delay exactly
    CHECK(b.gridCount * b.step == doctest::Approx(b.upperDelay).epsilon(1e-15));
}

TEST_CASE("halving epsilon scales alpha, delta and kappa; the horizon grows slowly") {
    auto m = boundsToy();
    auto b1 = computeBounds(m, 0, 0.1, 1.0);
    auto b2 = computeBounds(m, 0, 0.05, 1.0);
    CHECK(b2.alpha == doctest::Approx(b1.alpha / 2).epsilon(1e-12));
    CHECK(b2.rawStep == doctest::Approx(b1.rawStep / 2).epsilon(1e-12));
    // kappa uses the adjusted step: proportional up to grid rounding
    CHECK(b2.kappa < b1.kappa);
    CHECK(b2.kappa == doctest::Approx(b1.kappa / 2).epsilon(1e-3));
    CHECK(b2.upperDelay > b1.upperDelay);
    CHECK(b2.upperDelay < b1.upperDelay * 1.2);
}

TEST_CASE("the value branch of the horizon dominates when minR is small") {
    auto m = boundsToy();
    m.rewards.rateReward[0] = 1e-4; // minR tiny
    auto b = computeBounds(m, 0, 0.1, 1.0);
    CHECK(b.upperDelay == doctest::Approx(1.0 / (1.0 * 1e-4)).epsilon(1e-12));
}

TEST_CASE("bounds refuse an infinite upper bound or degenerate stats") {
    auto m = boundsToy();
    CHECK_THROWS_AS(computeBounds(m, 0, 0.1, std::numeric_limits<double>::infinity()),
                    std::invalid_argument);
    auto zeroR = m;
    zeroR.rewards.rateReward[0] = 0.0;
    CHECK_THROWS_AS(computeBounds(zeroR, 0, 0.1, 1.0), std::invalid_argument);
}

TEST_CASE("a K=1 grid is the fixed-delay chain at delta") {
    auto m = loadBundled("toy_tradeoff.fdctmc");
    auto mdp = buildDiscretizedMdp(m, {handBounds(m, 0, 1, 0.8, 1e-10)});
    REQUIRE(mdp.families.size() == 1);
    auto actions = materializeActions(mdp.families[0]);
    REQUIRE(actions.size() == 1);
    auto direct = buildStepKernel(m, mdp.families[0].ctx.sub.settingState, 0.8, 1e-10);
    CHECK(actions[0].expectedReward == doctest::Approx(direct.expectedReward).epsilon(1e-9));
    for (const auto& [d, p] : direct.transitions.entries())
        CHECK(actions[0].transitions.prob(d) == doctest::Approx(p).epsilon(1e-9));
}

TEST_CASE("swept action kernels match independent single-point evaluations") {
    auto m = loadBundled("toy_tradeoff.fdctmc");
    const std::size_t k = 40;
    const double step = 0.11, kappa = 1e-8;
    auto mdp = buildDiscretizedMdp(m, {handBounds(m, 0, k, step, kappa)});
    auto actions = materializeActions(mdp.families[0]);
    REQUIRE(actions.size() == k);
    StateId setting = mdp.families[0].ctx.sub.settingState;
    for (std::size_t i = 1; i <= k; ++i) {
        CAPTURE(i);
        auto direct = buildStepKernel(m, setting, i * step, kappa);
        CHECK(std::abs(actions[i - 1].expectedReward - direct.expectedReward) <= 2 * kappa);
        for (const auto& [d, p] : direct.transitions.entries())
            CHECK(std::abs(actions[i - 1].transitions.prob(d) - p) <= 2 * kappa);
    }
}

TEST_CASE("value iteration picks the cheaper of two actions to the target") {
    auto m = loadBundled("toy_single.fdctmc"); // cost delta + 0.1, increasing
    auto mdp = buildDiscretizedMdp(m, {handBounds(m, 0, 2, 0.3, 1e-10)});
    auto sol = solveMdp(mdp, 1e-11);
    REQUIRE(sol.policy.size() == 1);
    CHECK(sol.policy.begin()->second == 1);
    CHECK(sol.values[m.initialState] == doctest::Approx(0.3 + 0.1).epsilon(1e-8));
}

TEST_CASE("a one-action-per-state MDP equals the reward-engine solve") {
    auto m = loadBundled("dpm2.fdctmc");
    std::vector<DiscretizationBounds> bounds;
    bounds.push_back(handBounds(m, m.eventIndex("f1"), 1, 1.0, 1e-10));
    bounds.push_back(handBounds(m, m.eventIndex("f2"), 1, 2.0, 1e-10));
    auto mdp = buildDiscretizedMdp(m, bounds);
    auto sol = solveMdp(mdp, 1e-11);
    auto engine = expectedReward(m, 1e-11);
    CHECK(sol.values[m.initialState] == doctest::Approx(engine.value).epsilon(1e-8));
}

TEST_CASE("small trade-off MDP matches exhaustive per-action enumeration") {
    auto m = loadBundled("toy_tradeoff.fdctmc");
    const std::size_t k = 24;
    const double step = 0.25;
    auto mdp = buildDiscretizedMdp(m, {handBounds(m, 0, k, step, 1e-10)});
    auto sol = solveMdp(mdp, 1e-11);

    double bestValue = std::numeric_limits<double>::infinity();
    std::size_t bestAction = 0;
    for (std::size_t i = 1; i <= k; ++i) {
        auto value = expectedReward(applyDelays(m, {{"f", i * step}}), 1e-11).value;
        if (value < bestValue) {
            bestValue = value;
            bestAction = i;
        }
    }
    CHECK(sol.policy.begin()->second == bestAction);
    CHECK(sol.values[m.initialState] == doctest::Approx(bestValue).epsilon(1e-7));
}

TEST_CASE("prob1e agrees with a direct graph analysis on random chains") {
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 200; ++trial) {
        CAPTURE(trial);
        const std::size_t n = 8;
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        std::uniform_int_distribution<int> fan(1, 2);
        std::vector<std::vector<std::vector<std::size_t>>> supports(n);
        std::vector<bool> target(n, false);
        target[n - 1] = true;
        for (std::size_t s = 0; s + 1 < n; ++s) {
            if (pick(gen) == 0) continue; // occasional deadlock state
            std::vector<std::size_t> sup;
            for (int i = 0; i < fan(gen); ++i) sup.push_back(pick(gen));
            supports[s].push_back(sup);
        }
        auto got = prob1eStates(supports, target);

        // reference for a Markov chain: almost-sure reachability holds iff
        // no reachable state loses access to the target
        std::vector<bool> canReach(n, false);
        canReach[n - 1] = true;
        bool grew = true;
        while (grew) {
            grew = false;
            for (std::size_t s = 0; s + 1 < n; ++s)
                if (!canReach[s] && !supports[s].empty())
                    for (std::size_t d : supports[s][0])
                        if (canReach[d]) {
                            canReach[s] = true;
                            grew = true;
                        }
        }
        std::vector<bool> expected(n, false);
        for (std::size_t s = 0; s < n; ++s) {
            if (target[s]) { expected[s] = true; continue; }
            if (!canReach[s]) continue;
            // forward closure must stay inside canReach
            std::vector<bool> seen(n, false);
            std::vector<std::size_t> stack{s};
            seen[s] = true;
            bool ok = true;
            while (!stack.empty() && ok) {
                auto u = stack.back();
                stack.pop_back();
                if (target[u]) continue;
                if (supports[u].empty()) { ok = false; break; }
                if (!canReach[u]) { ok = false; break; }
                for (std::size_t d : supports[u][0])
                    if (!seen[d]) {
                        seen[d] = true;
                        stack.push_back(d);
                    }
            }
            expected[s] = ok;
        }
        for (std::size_t s = 0; s < n; ++s) CHECK(got[s] == expected[s]);
    }
}

TEST_CASE("synthesize: straight-to-target toy picks the smallest grid point") {
    auto m = loadBundled("toy_single.fdctmc");
    auto res = synthesize(m, 0.01);
    REQUIRE(res.delays.count("f"));
    const auto& b = res.perEventBounds[0];
    CHECK(res.delays.at("f") == doctest::Approx(b.step));
    // the verification pass is allowed a truncation error within epsilon/10
    CHECK(std::abs(res.value - (b.step + 0.1)) <= 0.001);
    CHECK(res.value <= res.valUpper + 1e-9);
}

TEST_CASE("synthesized delays lie on the grid") {
    for (const auto* name : {"toy_single.fdctmc", "toy_race.fdctmc", "toy_tradeoff.fdctmc"}) {
        CAPTURE(name);
        auto res = synthesize(loadBundled(name), 0.02);
        for (const auto& b : res.perEventBounds) {
            double ratio = res.delays.at(b.eventName) / b.step;
            CHECK(std::abs(ratio - std::round(ratio)) < 1e-9);
            CHECK(std::round(ratio) >= 1);
            CHECK(std::round(ratio) <= static_cast<double>(b.gridCount));
        }
    }
}

TEST_CASE("shrinking epsilon never worsens the synthesized value") {
    auto m = loadBundled("toy_tradeoff.fdctmc");
    double last = std::numeric_limits<double>::infinity();
    for (double eps : {0.08, 0.04, 0.02}) {
        CAPTURE(eps);
        auto res = synthesize(m, eps);
        CHECK(res.value <= last + 1e-6);
        last = res.value;
    }
}

TEST_CASE("synthesis refuses models with infinite initial expected reward") {
    auto m = loadSource(R"(fdctmc
module m
  fdelay f = 1.0;
  s : [0..2] init 0;
  [] s=0 -> 1.0:(s'=2);
  [a] s=0 --f-> 1.0:(s'=1);
  [] s=1 -> 1.0:(s'=1);
endmodule
label "target" = s=2;
rewards
  true : 1.0;
  [a] true : 0.1;
endrewards
)");
    CHECK_THROWS_WITH_AS(synthesize(m, 0.01), doctest::Contains("specify better"),
                         std::invalid_argument);
}

TEST_CASE("synthesis surfaces compute-budget violations") {
    auto m = loadBundled("dpm2.fdctmc");
    CHECK_THROWS_AS(synthesize(m, 0.005, /*productBudget=*/1000), ComputeBudgetExceeded);
}

TEST_CASE("synthesize verifies the result against the reward engine") {
    auto m = loadBundled("toy_race.fdctmc");
    auto res = synthesize(m, 0.02);
    auto check = expectedReward(applyDelays(m, res.delays), 1e-9);
    CHECK(res.value == doctest::Approx(check.value).epsilon(1e-6));
    CHECK(res.value <= res.valUpper + 1e-9);
    CHECK(std::abs(res.mdpValue - res.value) <= 0.02);
}
