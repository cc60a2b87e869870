#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fdctmc/model.hpp"

namespace fdctmc {

// Thrown when a computation would exceed the configured number of sparse
// vector-matrix products. Never silently truncates.
struct ComputeBudgetExceeded : std::runtime_error {
    explicit ComputeBudgetExceeded(const std::string& what, std::uint64_t needed)
        : std::runtime_error(what), products(needed) {}
    std::uint64_t products;
};

// Uniformized subordinated chain. Local states: region first, then absorbing
// exits. P rows are row-stochastic; exit rows are identity. Stored as CSR
// since the per-grid-point products dominate the synthesis runtime.
struct UniformizedChain {
    std::size_t numRegion = 0;
    std::size_t numStates = 0;
    double lambda = 1.0;
    std::vector<std::size_t> rowPtr; // size numStates+1
    std::vector<std::size_t> colIdx;
    std::vector<double> value;
    std::vector<double> rateReward;  // exits 0
    std::vector<double> jumpImpulse; // expected impulse per uniformization jump

    std::size_t nnz() const { return colIdx.size(); }

    void addRow(const std::vector<std::pair<std::size_t, double>>& entries) {
        for (const auto& [k, p] : entries) {
            colIdx.push_back(k);
            value.push_back(p);
        }
        rowPtr.push_back(colIdx.size());
    }
};

UniformizedChain uniformize(const SubordinatedChain& sc, const FdctmcModel& model);

struct TruncationPlan {
    int J = 0;
    double perStepError = 0.0;
    double lambdaDelta = 0.0;
    std::vector<double> pois; // pois[j] = P[Poisson(lambdaDelta) = j], j in [0, J]
    std::vector<double> tail; // tail[j] = P[Poisson(lambdaDelta) > j]
};

// Smallest J whose Poisson tail mass is at most epsilonStep, with the
// weights and tails required by the reward integral.
TruncationPlan poissonTruncation(double lambdaDelta, double epsilonStep);

struct TransientState {
    std::vector<double> pi;
    double accumulatedReward = 0.0;
    double elapsed = 0.0;
    double truncationBudgetUsed = 0.0;
};

// One grid step of the iterative scheme: J vector-matrix products advance pi
// and simultaneously integrate the expected rate reward and jump impulses
// over the step interval.
TransientState transientStep(const UniformizedChain& chain, const TransientState& current,
                             double delta, const TruncationPlan& plan);

// Stepping engine used by the sweep, the reward engine and the streamed MDP
// solve. A single J keeps every prefix within the total budget kappa.
class TransientWalker {
public:
    TransientWalker(const UniformizedChain& chain, std::size_t startLocal, double delta,
                    std::size_t steps, double kappa,
                    std::uint64_t productBudget = kDefaultProductBudget);

    const TransientState& advance();
    const TransientState& state() const { return state_; }
    void reset();

    // One step fused with the action score of the streamed MDP solve:
    // returns accumulatedReward_i + pi_i . c without materializing the dot
    // product separately (pi_i . c = sum_j pois_j (v_j . c)).
    double advanceScored(const double* c);

    int truncationJ() const { return plan_.J; }
    double delta() const { return delta_; }
    std::uint64_t productsDone() const { return products_; }
    std::uint64_t productsPlanned() const { return static_cast<std::uint64_t>(plan_.J) * steps_; }

    static constexpr std::uint64_t kDefaultProductBudget = 2'000'000'000ULL;

private:
    const UniformizedChain& chain_;
    std::size_t start_;
    double delta_;
    std::size_t steps_;
    TruncationPlan plan_;
    TransientState state_;
    std::vector<double> v_, tmp_, rc_; // rc_: rateReward/lambda + jumpImpulse
    double rewardComp_ = 0.0; // Kahan compensation for accumulatedReward
    std::uint64_t products_ = 0;
};

std::vector<TransientState> transientSweep(const UniformizedChain& chain, std::size_t startLocal,
                                           double delta, std::size_t steps, double kappa,
                                           std::uint64_t productBudget =
                                               TransientWalker::kDefaultProductBudget);

struct SweepMinResult {
    double bestQ = 0.0;
    std::size_t bestAction = 0; // 1-based grid index
};

// Full K-point sweep minimization of q_i = accumulatedReward_i + pi_i . c,
// the inner loop of the streamed MDP solve. Same arithmetic as advancing a
// TransientWalker K times, in one tight pass.
SweepMinResult sweepMinimize(const UniformizedChain& chain, std::size_t startLocal, double delta,
                             std::size_t steps, double kappa, const double* c,
                             std::uint64_t productBudget, std::uint64_t& products);

// Reference grid: every point evaluated independently from the start vector
// with its own truncation for error kappa. Used for testing and the
// step-count comparison only.
struct NaiveGridResult {
    std::vector<TransientState> states;
    std::uint64_t products = 0;
    std::vector<int> truncationJs;
};

NaiveGridResult naiveTransientGrid(const UniformizedChain& chain, std::size_t startLocal,
                                   double delta, std::size_t steps, double kappa,
                                   std::uint64_t productBudget =
                                       TransientWalker::kDefaultProductBudget);

// Precomputed step matrix M = e^(-lambda delta) sum_j P^j (lambda delta)^j / j!
// and the matching one-step reward functional. Subject to fill-in; kept
// behind an explicit choice and only worthwhile while M stays sparse.
struct PrecomputedStep {
    std::vector<std::vector<std::pair<std::size_t, double>>> m; // row-major sparse
    std::vector<double> stepReward; // reward collected over one step from state i
    std::uint64_t buildMatMatProducts = 0;
    double density = 0.0; // nnz(M) / n^2

    std::size_t nnz() const {
        std::size_t c = 0;
        for (const auto& r : m) c += r.size();
        return c;
    }
};

PrecomputedStep precomputeStep(const UniformizedChain& chain, double delta,
                               const TruncationPlan& plan);

// Walker over the precomputed matrix; one product per grid step.
class PrecomputedWalker {
public:
    PrecomputedWalker(const UniformizedChain& chain, const PrecomputedStep& step,
                      std::size_t startLocal, double delta);

    const TransientState& advance();
    const TransientState& state() const { return state_; }
    std::uint64_t productsDone() const { return products_; }

private:
    const PrecomputedStep& step_;
    double delta_;
    TransientState state_;
    std::vector<double> tmp_;
    double rewardComp_ = 0.0;
    std::uint64_t products_ = 0;
};

} // namespace fdctmc
