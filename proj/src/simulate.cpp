#include "fdctmc/simulate.hpp"

#include <cmath>
#include <stdexcept>
#include <thread>

namespace fdctmc {

Simulator::Simulator(const FdctmcModel& model)
    : numEvents_(model.fdEvents.size()), initial_(model.initialState) {
    const std::size_t n = model.numStates;
    exitRates_.resize(n);
    rateRewards_ = model.rewards.rateReward;
    isTarget_.assign(n, false);
    for (StateId t : model.target.states) isTarget_[t] = true;

    expRows_.resize(n);
    for (StateId s = 0; s < n; ++s) {
        exitRates_[s] = model.rateMatrix.exitRate(s);
        double cum = 0.0;
        for (const auto& [d, r] : model.rateMatrix.row(s)) {
            cum += r;
            expRows_[s].push_back({d, cum, model.rewards.impulse(s, kExpEvent, d)});
        }
    }

    kernels_.resize(numEvents_);
    delays_.resize(numEvents_);
    for (std::size_t f = 0; f < numEvents_; ++f) {
        delays_[f] = model.fdEvents[f].delay;
        kernels_[f].resize(n);
        for (const auto& [s, dist] : model.fdEvents[f].kernel) {
            double cum = 0.0;
            for (const auto& [d, p] : dist.entries()) {
                cum += p;
                kernels_[f][s].push_back({d, cum, model.rewards.impulse(s, static_cast<int>(f), d)});
            }
        }
    }
}

RunResult simulateRun(const FdctmcModel& model, std::uint64_t seed, std::uint64_t stepCap,
                      bool recordTrace) {
    Simulator sim(model);
    RunRng rng(seed, 0);
    return sim.run(rng, stepCap, recordTrace);
}

Estimate estimateExpectedReward(const FdctmcModel& model, std::uint64_t runs, std::uint64_t seed,
                                std::uint64_t stepCap, unsigned threads) {
    if (runs == 0) throw std::invalid_argument("estimate needs at least one run");
    if (runs > 100'000'000) throw std::invalid_argument("run count too large");

    Simulator sim(model);
    std::vector<double> rewards(runs);
    std::vector<std::uint8_t> reached(runs);

    auto worker = [&](std::uint64_t lo, std::uint64_t hi) {
        for (std::uint64_t k = lo; k < hi; ++k) {
            RunRng rng(seed, k);
            auto r = sim.run(rng, stepCap);
            rewards[k] = r.reward;
            reached[k] = r.reachedTarget ? 1 : 0;
        }
    };

    if (threads <= 1) {
        worker(0, runs);
    } else {
        std::vector<std::thread> pool;
        std::uint64_t chunk = (runs + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            std::uint64_t lo = t * chunk, hi = std::min<std::uint64_t>(runs, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(worker, lo, hi);
        }
        for (auto& t : pool) t.join();
    }

    Estimate est;
    est.runs = runs;
    for (std::uint64_t k = 0; k < runs; ++k)
        if (!reached[k]) ++est.truncatedRuns;
    if (est.truncatedRuns == runs)
        throw std::runtime_error("every simulation run was truncated before reaching the target; "
                                 "no estimate available");

    // aggregation in run order keeps results independent of the thread count
    long double sum = 0.0L;
    for (std::uint64_t k = 0; k < runs; ++k) sum += rewards[k];
    est.mean = static_cast<double>(sum / runs);
    long double sq = 0.0L;
    for (std::uint64_t k = 0; k < runs; ++k) {
        long double d = rewards[k] - est.mean;
        sq += d * d;
    }
    double variance = runs > 1 ? static_cast<double>(sq / (runs - 1)) : 0.0;
    est.stdError = std::sqrt(variance / static_cast<double>(runs));
    return est;
}

} // namespace fdctmc
