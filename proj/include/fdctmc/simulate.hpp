#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "fdctmc/model.hpp"

namespace fdctmc {

// Counter-based substream RNG. Run k of master seed m draws from a splitmix64
// stream seeded with mix(m, k), so runs are independent and reproducible
// regardless of batching or thread count.
class RunRng {
public:
    RunRng(std::uint64_t seed, std::uint64_t runIndex) {
        state_ = seed + 0x9e3779b97f4a7c15ULL * (runIndex + 1);
        next(); // decorrelate nearby seeds
    }

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform on (0,1]
    double uniform() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

private:
    std::uint64_t state_;
};

struct RunStep {
    StateId state = 0;
    int event = kExpEvent; // fd index, or kExpEvent
    double dwell = 0.0;
};

struct RunResult {
    double reward = 0.0;
    bool reachedTarget = false;
    std::vector<RunStep> steps; // filled only when a trace is requested
};

inline constexpr std::uint64_t kDefaultStepCap = 1'000'000;

// Discrete-event simulator of the full fdCTMC semantics: persistent fd
// timers, exponential timer resampled in every state (memorylessness), ties
// broken by event priority with fd events preceding the exponential event.
// No structural restrictions are required. Tables are flattened once so runs
// stay cheap.
class Simulator {
public:
    explicit Simulator(const FdctmcModel& model);

    template <class Rng>
    RunResult run(Rng& rng, std::uint64_t stepCap = kDefaultStepCap,
                  bool recordTrace = false) const {
        constexpr double inf = std::numeric_limits<double>::infinity();
        RunResult res;
        StateId s = initial_;
        std::vector<double> timer(numEvents_, inf);
        for (std::size_t f = 0; f < numEvents_; ++f)
            if (!kernels_[f][s].empty()) timer[f] = delays_[f];

        for (std::uint64_t step = 0; step < stepCap; ++step) {
            double exitRate = exitRates_[s];
            double dwell = exitRate > 0.0 ? rng.exponential(exitRate) : inf;
            int winner = kExpEvent;
            for (std::size_t f = 0; f < numEvents_; ++f)
                if (timer[f] < dwell || (timer[f] == dwell && timer[f] < inf &&
                                         winner == kExpEvent)) {
                    winner = static_cast<int>(f);
                    dwell = timer[f];
                }

            if (winner == kExpEvent && !(dwell < inf)) return res; // deadlock

            const auto& choices = winner == kExpEvent ? expRows_[s] : kernels_[winner][s];
            double u = rng.uniform() * (winner == kExpEvent ? exitRate : 1.0);
            const Choice* pick = &choices.back();
            for (const auto& ch : choices)
                if (u <= ch.cumulative) { pick = &ch; break; }

            res.reward += dwell * rateRewards_[s] + pick->impulse;
            if (recordTrace) res.steps.push_back({s, winner, dwell});

            StateId next = pick->dest;
            for (std::size_t f = 0; f < numEvents_; ++f) {
                if (kernels_[f][next].empty())
                    timer[f] = inf; // inactive
                else if (static_cast<int>(f) == winner || timer[f] == inf)
                    timer[f] = delays_[f]; // occurred or newly active: timer reset
                else
                    timer[f] -= dwell; // persisting timer keeps running
            }

            s = next;
            if (isTarget_[s]) {
                res.reachedTarget = true;
                return res;
            }
        }
        return res; // step cap hit
    }

private:
    struct Choice {
        StateId dest;
        double cumulative; // cumulative rate (exponential) or probability (fd)
        double impulse;
    };

    std::size_t numEvents_;
    StateId initial_;
    std::vector<double> exitRates_, rateRewards_, delays_;
    std::vector<bool> isTarget_;
    std::vector<std::vector<Choice>> expRows_;
    std::vector<std::vector<std::vector<Choice>>> kernels_; // [event][state]
};

RunResult simulateRun(const FdctmcModel& model, std::uint64_t seed,
                      std::uint64_t stepCap = kDefaultStepCap, bool recordTrace = false);

struct Estimate {
    double mean = 0.0;
    double stdError = 0.0;
    std::uint64_t runs = 0;
    std::uint64_t truncatedRuns = 0; // runs that ended without reaching the target
};

// Monte Carlo estimate over independent substream runs. Deterministic for a
// given seed, independent of the thread count. Throws when every run was
// truncated.
Estimate estimateExpectedReward(const FdctmcModel& model, std::uint64_t runs, std::uint64_t seed,
                                std::uint64_t stepCap = kDefaultStepCap, unsigned threads = 1);

} // namespace fdctmc
