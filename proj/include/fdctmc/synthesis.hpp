#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fdctmc/model.hpp"
#include "fdctmc/reward.hpp"
#include "fdctmc/transient.hpp"

namespace fdctmc {

// Decision-state structure of the discretized MDP: fd setting states,
// exponential-only states and targets. Region-interior states never carry
// decision mass.
struct MdpStructure {
    std::map<int, StateId> settingStates;     // event index -> setting state
    std::vector<StateId> expDecisionStates;   // no fd event, positive exit rate
    std::vector<StateId> deadlockStates;      // no fd event, no exponential exit
    std::size_t decisionStateCount = 0;       // |S'| incl. targets
    double minOneStepReward = 0.0;            // structural lower bound (R3/R4)
};

MdpStructure analyzeMdpStructure(const FdctmcModel& model);

struct DiscretizationBounds {
    int eventIndex = -1;
    std::string eventName;
    double epsilon = 0.0;   // per-event share of the requested error bound
    double valUpper = 0.0;  // upper bound on the optimal expected reward
    double boundSteps = 0.0; // Bound[#]
    double alpha = 0.0;
    double d1 = 0.0;
    double upperDelay = 0.0; // max delay covered by the grid
    double rawStep = 0.0;    // alpha / D1 before grid rounding
    double step = 0.0;       // delta, rounded down so K*delta = upperDelay
    double kappa = 0.0;      // transient precision per action computation
    std::size_t gridCount = 0; // K

    // subordinated chain statistics the formulas were evaluated on
    double lambda = 0.0, minP = 0.0, minR = 0.0, maxR = 0.0;
    std::size_t sizeFd = 0;
    double minOneStepReward = 0.0;
    std::size_t decisionStateCount = 0;
};

DiscretizationBounds computeBounds(const FdctmcModel& model, int eventIndex, double epsilon,
                                   double valUpper);

// One fd setting state with its K delay actions, produced incrementally from
// a single transient sweep; actions are streamed during the solve, never
// stored. When the precomputed one-step matrix was requested and stayed
// sparse enough it replaces the per-step jump expansion.
struct FdActionFamily {
    DiscretizationBounds bounds;
    FdStepContext ctx;
    std::optional<PrecomputedStep> precomputed;
};

struct DiscretizedMdp {
    std::size_t numStates = 0;
    StateId initialState = 0;
    std::vector<bool> isTarget;
    std::vector<std::optional<StepKernel>> expActions; // per exp decision state
    std::vector<FdActionFamily> families;              // per fd event
    std::vector<int> familyOfState;                    // -1 unless fd setting state
    std::vector<bool> kept; // some policy reaches the target almost surely
    std::uint64_t plannedProductsPerSweep = 0;
};

// tryPrecomputedStep: precompute the summed one-step matrix per event and
// stream with it, but only while its fill-in density stays below 25%;
// otherwise the event falls back to the iterative scheme.
DiscretizedMdp buildDiscretizedMdp(const FdctmcModel& model,
                                   const std::vector<DiscretizationBounds>& bounds,
                                   std::uint64_t productBudget =
                                       TransientWalker::kDefaultProductBudget,
                                   bool tryPrecomputedStep = false);

// All K step kernels of a family, for inspection and tests (small K only).
std::vector<StepKernel> materializeActions(const FdActionFamily& family,
                                           std::uint64_t productBudget =
                                               TransientWalker::kDefaultProductBudget);

struct MdpSolution {
    std::vector<double> values;          // over model states; +inf when not kept
    std::map<StateId, std::size_t> policy; // fd setting state -> grid index (1-based)
    std::size_t iterations = 0;
    std::uint64_t products = 0;
};

// Gauss-Seidel value iteration for the minimal expected total reward until
// target; stops when successive sweeps differ by at most `convergence`.
MdpSolution solveMdp(const DiscretizedMdp& mdp, double convergence,
                     std::size_t maxIterations = 200'000,
                     std::uint64_t productBudget = TransientWalker::kDefaultProductBudget);

struct SynthesisResult {
    std::map<std::string, double> delays;
    double value = 0.0;    // achieved expected reward, re-verified at `delays`
    double valUpper = 0.0; // expected reward at the declared delays
    double mdpValue = 0.0; // optimal value of the discretized MDP
    double epsilon = 0.0;
    std::vector<DiscretizationBounds> perEventBounds;
    std::size_t iterations = 0;
    ExpectedRewardResult verification;
    // wall-clock diagnostics, milliseconds
    double msBounds = 0.0, msSolve = 0.0, msVerify = 0.0;
};

SynthesisResult synthesize(const FdctmcModel& model, double epsilon,
                           std::uint64_t productBudget =
                               TransientWalker::kDefaultProductBudget,
                           std::size_t maxIterations = 200'000,
                           bool tryPrecomputedStep = false);

} // namespace fdctmc
