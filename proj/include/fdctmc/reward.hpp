#pragma once

#include <optional>
#include <set>
#include <vector>

#include "fdctmc/model.hpp"
#include "fdctmc/transient.hpp"

namespace fdctmc {

// One step of the embedded decision-free chain: either the embedded
// exponential jump of a state without active fd events, or a full fd sojourn
// from a setting state until the timer fires or the region is left.
struct StepKernel {
    enum class Kind { ExpStep, FdStep };
    Kind kind = Kind::ExpStep;
    StateId source = 0;
    int event = kExpEvent;    // fd index for FdStep
    double delay = 0.0;       // FdStep only
    Distribution transitions; // sums to 1 up to the transient precision
    double expectedReward = 0.0;
};

// Per-event machinery reused across delays: the subordinated chain, its
// uniformization, and the fd kernel/impulses mapped to local indices.
struct FdStepContext {
    SubordinatedChain sub;
    UniformizedChain chain;
    std::size_t startLocal = 0;
    // per region-local state: kernel row as (model destination, prob, impulse)
    std::vector<std::vector<std::tuple<StateId, double, double>>> fireRows;

    // states an fd action can reach (exits and kernel destinations of region
    // states reachable from the setting state); identical for every delay
    std::vector<StateId> support;
};

FdStepContext makeFdStepContext(const FdctmcModel& model, int eventIndex);

// Assemble the step kernel for a finished transient state of the sweep: exit
// mass stays put, region mass fires through the event kernel collecting fd
// impulses.
StepKernel fdStepFromTransient(const FdStepContext& ctx, const TransientState& ts, double delay);

// ExpStep of a state with no active fd event. Throws if E(s)=0 (deadlock;
// such states are classified infinite by the caller).
StepKernel buildExpStep(const FdctmcModel& model, StateId state);

// Spec-level convenience: kernel of `state` under the model's declared delay
// (or delayOverride), running its own transient analysis at precision kappa.
StepKernel buildStepKernel(const FdctmcModel& model, StateId state,
                           std::optional<double> delayOverride = std::nullopt,
                           double kappa = 1e-9);

// States of the embedded step chain from which the target is not reached
// with probability 1. Indexed over model states; only decision states carry
// kernels, other entries must be nullopt.
std::set<StateId> infiniteRewardStates(const std::vector<std::optional<StepKernel>>& kernels,
                                       const TargetSet& target, std::size_t numStates);

struct ExpectedRewardResult {
    double value = 0.0;                // +infinity when initial state is infinite
    std::vector<double> perStateValues; // indexed by model state (0 on target)
    std::set<StateId> infiniteStates;
    double residual = 0.0;
    std::size_t iterations = 0;
};

// Expected total reward until the target set at the model's declared delays.
// Requires restrictions R1/R2 only. epsilonSolve is split between the
// transient kernels and the linear-solve residual.
ExpectedRewardResult expectedReward(const FdctmcModel& model, double epsilonSolve,
                                    std::uint64_t productBudget =
                                        TransientWalker::kDefaultProductBudget);

} // namespace fdctmc
