#pragma once

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "fdctmc/lang.hpp"
#include "fdctmc/model.hpp"
#include "fdctmc/reward.hpp"
#include "fdctmc/transient.hpp"

namespace testutil {

inline std::string readFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline fdctmc::FdctmcModel loadBundled(const std::string& name) {
    auto res = fdctmc::lang::loadModel(readFile(std::string(FDCTMC_MODELS_DIR) + "/" + name));
    if (!res.ok()) {
        std::string msg = "model " + name + " failed to load:";
        for (const auto& d : res.diagnostics) msg += "\n  " + d.render();
        throw std::runtime_error(msg);
    }
    return *res.model;
}

inline fdctmc::FdctmcModel loadSource(const std::string& source) {
    auto res = fdctmc::lang::loadModel(source);
    if (!res.ok()) {
        std::string msg = "inline model failed to load:";
        for (const auto& d : res.diagnostics) msg += "\n  " + d.render();
        throw std::runtime_error(msg);
    }
    return *res.model;
}

// Expected hitting time of state 0 from `from` in a birth-death chain with
// birth rates lam[i] (i -> i+1, lam[top] = 0) and death rates mu[i]
// (i -> i-1). Independent closed-form recursion: T_i, the expected time to
// drop from i to i-1, satisfies T_i = (1 + lam_i * T_{i+1}) / mu_i.
inline double birthDeathHittingTime(const std::vector<double>& lam, const std::vector<double>& mu,
                                    std::size_t from) {
    std::size_t n = lam.size() - 1; // states 0..n
    std::vector<double> T(n + 1, 0.0);
    for (std::size_t i = n; i >= 1; --i) {
        double birth = i < n ? lam[i] : 0.0;
        T[i] = (1.0 + birth * (i < n ? T[i + 1] : 0.0)) / mu[i];
        if (i == 1) break;
    }
    double total = 0.0;
    for (std::size_t i = 1; i <= from; ++i) total += T[i];
    return total;
}

// Two-sample Kolmogorov-Smirnov p-value (asymptotic).
inline double ksTwoSampleP(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j]) ++i;
        else ++j;
        double fa = static_cast<double>(i) / a.size();
        double fb = static_cast<double>(j) / b.size();
        d = std::max(d, std::abs(fa - fb));
    }
    double ne = std::sqrt(static_cast<double>(a.size()) * b.size() / (a.size() + b.size()));
    double lambda = (ne + 0.12 + 0.11 / ne) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k)
        p += 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
    return std::min(1.0, std::max(0.0, p));
}

// Random subordinated-style uniformized chain for property tests: nRegion
// region states with random sparse jumps among region+exit states.
inline fdctmc::UniformizedChain randomChain(std::uint64_t seed, std::size_t nRegion,
                                            std::size_t nExit) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> rate(0.1, 3.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const std::size_t n = nRegion + nExit;
    std::vector<std::vector<std::pair<std::size_t, double>>> rows(nRegion);
    double maxExit = 0.0;
    for (std::size_t i = 0; i < nRegion; ++i) {
        double total = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i || unit(gen) < 0.45) continue;
            double r = rate(gen);
            rows[i].push_back({k, r});
            total += r;
        }
        if (rows[i].empty()) { // keep every region state live
            double r = rate(gen);
            rows[i].push_back({(i + 1) % n, r});
            total = r;
        }
        maxExit = std::max(maxExit, total);
    }

    fdctmc::UniformizedChain uc;
    uc.numRegion = nRegion;
    uc.numStates = n;
    uc.lambda = maxExit;
    uc.rowPtr.push_back(0);
    uc.rateReward.assign(n, 0.0);
    uc.jumpImpulse.assign(n, 0.0);
    for (std::size_t i = 0; i < nRegion; ++i) {
        double total = 0.0;
        for (auto& [k, r] : rows[i]) total += r;
        std::vector<std::pair<std::size_t, double>> entries;
        double self = 1.0 - total / uc.lambda;
        for (auto& [k, r] : rows[i]) {
            if (k == i) continue;
            entries.push_back({k, r / uc.lambda});
        }
        if (self > 0.0 || rows[i].empty()) entries.push_back({i, self});
        std::sort(entries.begin(), entries.end());
        uc.addRow(entries);
        uc.rateReward[i] = unit(gen) * 2.0;
        uc.jumpImpulse[i] = unit(gen) * 0.5;
    }
    for (std::size_t e = nRegion; e < n; ++e) uc.addRow({{e, 1.0}});
    return uc;
}

} // namespace testutil
