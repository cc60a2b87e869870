#include "fdctmc/transient.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace fdctmc {

UniformizedChain uniformize(const SubordinatedChain& sc, const FdctmcModel& model) {
    UniformizedChain uc;
    uc.numRegion = sc.regionStates.size();
    uc.numStates = sc.numLocal();
    uc.lambda = sc.lambda;
    uc.rowPtr.push_back(0);
    uc.rateReward.assign(uc.numStates, 0.0);
    uc.jumpImpulse.assign(uc.numStates, 0.0);

    for (std::size_t i = 0; i < uc.numRegion; ++i) {
        StateId s = sc.regionStates[i];
        uc.rateReward[i] = model.rewards.rateReward[s];
        double exitRate = 0.0;
        std::map<std::size_t, double> row;
        for (const auto& [local, rate] : sc.regionRates[i]) {
            row[local] += rate / uc.lambda;
            exitRate += rate;
            StateId dModel = local < uc.numRegion ? sc.regionStates[local]
                                                  : sc.exitStates[local - uc.numRegion];
            uc.jumpImpulse[i] += (rate / uc.lambda) * model.rewards.impulse(s, kExpEvent, dModel);
        }
        row[i] += 1.0 - exitRate / uc.lambda; // uniformization self-loop
        std::vector<std::pair<std::size_t, double>> entries;
        for (const auto& [k, p] : row)
            if (p != 0.0) entries.push_back({k, p});
        uc.addRow(entries);
    }
    for (std::size_t e = uc.numRegion; e < uc.numStates; ++e)
        uc.addRow({{e, 1.0}}); // exits absorb
    return uc;
}

TruncationPlan poissonTruncation(double lambdaDelta, double epsilonStep) {
    if (!(epsilonStep > 0.0) || !(epsilonStep < 1.0))
        throw std::invalid_argument("per-step truncation error must lie in (0,1)");
    if (lambdaDelta < 0.0) throw std::invalid_argument("lambda*delta must be non-negative");

    TruncationPlan plan;
    plan.perStepError = epsilonStep;
    plan.lambdaDelta = lambdaDelta;
    if (lambdaDelta == 0.0) {
        plan.J = 0;
        plan.pois = {1.0};
        plan.tail = {0.0};
        return plan;
    }

    const double logLd = std::log(lambdaDelta);
    long double cum = 0.0L;
    for (int j = 0;; ++j) {
        double logw = -lambdaDelta + j * logLd - std::lgamma(j + 1.0);
        double w = std::exp(logw);
        cum += w;
        plan.pois.push_back(w);
        double tail = static_cast<double>(1.0L - cum);
        if (tail < 1e-15 && j + 2 > lambdaDelta) {
            // 1-cum has lost all precision; bound the tail by the dominating
            // geometric series starting at the next weight
            double wNext = std::exp(-lambdaDelta + (j + 1) * logLd - std::lgamma(j + 2.0));
            double ratio = lambdaDelta / (j + 2.0);
            tail = wNext / (1.0 - ratio);
        }
        plan.tail.push_back(std::max(tail, 0.0));
        if (plan.tail.back() <= epsilonStep) {
            plan.J = j;
            return plan;
        }
        if (j > 20'000'000)
            throw std::runtime_error("poisson truncation did not converge (lambda*delta too large)");
    }
}

namespace {

inline void vecMat(const UniformizedChain& chain, const std::vector<double>& v,
                   std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    const std::size_t* col = chain.colIdx.data();
    const double* val = chain.value.data();
    for (std::size_t i = 0; i < chain.numStates; ++i) {
        double vi = v[i];
        if (vi == 0.0) continue;
        for (std::size_t e = chain.rowPtr[i]; e < chain.rowPtr[i + 1]; ++e)
            out[col[e]] += vi * val[e];
    }
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double t = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) t += a[i] * b[i];
    return t;
}

// compensated add; grid sweeps accumulate rewards over up to ~1e8 terms and
// plain summation noise would exceed the solver convergence thresholds
inline void kahanAdd(double& sum, double& comp, double term) {
    double y = term - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
}

} // namespace

TransientState transientStep(const UniformizedChain& chain, const TransientState& current,
                             double delta, const TruncationPlan& plan) {
    if (current.pi.size() != chain.numStates)
        throw std::invalid_argument("transientStep: dimension mismatch");

    TransientState next;
    next.pi.assign(chain.numStates, 0.0);
    next.elapsed = current.elapsed + delta;
    next.truncationBudgetUsed = current.truncationBudgetUsed + plan.perStepError;

    // reward integral: int_0^delta pi(t)*r dt = sum_j (pi P^j . r) tail_j / lambda,
    // expected impulses: jump j+1 happens within delta with probability tail_j
    std::vector<double> v = current.pi;
    std::vector<double> tmp(chain.numStates);
    double reward = 0.0;
    for (int j = 0;; ++j) {
        for (std::size_t k = 0; k < chain.numStates; ++k) next.pi[k] += plan.pois[j] * v[k];
        reward += plan.tail[j] * (dot(v, chain.rateReward) / chain.lambda + dot(v, chain.jumpImpulse));
        if (j == plan.J) break;
        vecMat(chain, v, tmp);
        v.swap(tmp);
    }
    next.accumulatedReward = current.accumulatedReward + reward;
    return next;
}

TransientWalker::TransientWalker(const UniformizedChain& chain, std::size_t startLocal,
                                 double delta, std::size_t steps, double kappa,
                                 std::uint64_t productBudget)
    : chain_(chain), start_(startLocal), delta_(delta), steps_(steps) {
    if (steps == 0) throw std::invalid_argument("sweep needs at least one step");
    if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
    plan_ = poissonTruncation(chain.lambda * delta, kappa / static_cast<double>(steps));
    std::uint64_t planned = productsPlanned();
    if (planned > productBudget)
        throw ComputeBudgetExceeded("transient sweep needs " + std::to_string(planned) +
                                        " vector-matrix products, budget is " +
                                        std::to_string(productBudget),
                                    planned);
    v_.resize(chain.numStates);
    tmp_.resize(chain.numStates);
    rc_.resize(chain.numStates);
    for (std::size_t k = 0; k < chain.numStates; ++k)
        rc_[k] = chain.rateReward[k] / chain.lambda + chain.jumpImpulse[k];
    reset();
}

void TransientWalker::reset() {
    state_.pi.assign(chain_.numStates, 0.0);
    state_.pi[start_] = 1.0;
    state_.accumulatedReward = 0.0;
    rewardComp_ = 0.0;
    state_.elapsed = 0.0;
    state_.truncationBudgetUsed = 0.0;
    products_ = 0;
}

const TransientState& TransientWalker::advance() {
    // in-place version of transientStep, reusing the two work vectors
    v_ = state_.pi;
    std::fill(state_.pi.begin(), state_.pi.end(), 0.0);
    for (int j = 0;; ++j) {
        for (std::size_t k = 0; k < chain_.numStates; ++k) state_.pi[k] += plan_.pois[j] * v_[k];
        kahanAdd(state_.accumulatedReward, rewardComp_, plan_.tail[j] * dot(v_, rc_));
        if (j == plan_.J) break;
        vecMat(chain_, v_, tmp_);
        v_.swap(tmp_);
        ++products_;
    }
    state_.elapsed += delta_;
    state_.truncationBudgetUsed += plan_.perStepError;
    return state_;
}

double TransientWalker::advanceScored(const double* c) {
    const std::size_t n = chain_.numStates;
    v_ = state_.pi;
    double* pi = state_.pi.data();
    double* v = v_.data();
    std::fill(pi, pi + n, 0.0);
    const double* rc = rc_.data();
    double score = 0.0;
    for (int j = 0;; ++j) {
        const double pj = plan_.pois[j], tj = plan_.tail[j];
        double dR = 0.0, dC = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            double vk = v[k];
            pi[k] += pj * vk;
            dR += vk * rc[k];
            dC += vk * c[k];
        }
        kahanAdd(state_.accumulatedReward, rewardComp_, tj * dR);
        score += pj * dC;
        if (j == plan_.J) break;
        double* out = tmp_.data();
        std::fill(out, out + n, 0.0);
        const std::size_t* col = chain_.colIdx.data();
        const double* val = chain_.value.data();
        for (std::size_t i = 0; i < n; ++i) {
            double vi = v[i];
            if (vi == 0.0) continue;
            for (std::size_t e = chain_.rowPtr[i]; e < chain_.rowPtr[i + 1]; ++e)
                out[col[e]] += vi * val[e];
        }
        std::swap(v_, tmp_);
        v = v_.data();
        ++products_;
    }
    state_.elapsed += delta_;
    state_.truncationBudgetUsed += plan_.perStepError;
    return state_.accumulatedReward + score;
}

std::vector<TransientState> transientSweep(const UniformizedChain& chain, std::size_t startLocal,
                                           double delta, std::size_t steps, double kappa,
                                           std::uint64_t productBudget) {
    TransientWalker walker(chain, startLocal, delta, steps, kappa, productBudget);
    std::vector<TransientState> out;
    out.reserve(steps);
    for (std::size_t i = 0; i < steps; ++i) out.push_back(walker.advance());
    return out;
}

SweepMinResult sweepMinimize(const UniformizedChain& chain, std::size_t startLocal, double delta,
                             std::size_t steps, double kappa, const double* c,
                             std::uint64_t productBudget, std::uint64_t& products) {
    if (steps == 0) throw std::invalid_argument("sweep needs at least one step");
    auto plan = poissonTruncation(chain.lambda * delta, kappa / static_cast<double>(steps));
    const std::uint64_t planned = static_cast<std::uint64_t>(plan.J) * steps;
    if (planned > productBudget)
        throw ComputeBudgetExceeded("sweep needs " + std::to_string(planned) +
                                        " vector-matrix products, budget is " +
                                        std::to_string(productBudget),
                                    planned);

    const std::size_t n = chain.numStates;
    const int J = plan.J;
    const double* pois = plan.pois.data();
    const double* tail = plan.tail.data();
    const std::size_t* rowPtr = chain.rowPtr.data();
    const std::size_t* col = chain.colIdx.data();
    const double* val = chain.value.data();

    // fold rate reward and jump impulses into one per-jump reward vector
    std::vector<double> rc(n);
    for (std::size_t k = 0; k < n; ++k)
        rc[k] = chain.rateReward[k] / chain.lambda + chain.jumpImpulse[k];

    std::vector<double> buffers(3 * n, 0.0);
    double* pi = buffers.data();       // pi_{i-1}, becomes pi_i
    double* v = buffers.data() + n;    // v_j walking the jump chain
    double* tmp = buffers.data() + 2 * n;
    pi[startLocal] = 1.0;

    double accum = 0.0, accumComp = 0.0;
    SweepMinResult best{std::numeric_limits<double>::infinity(), 0};
    for (std::size_t i = 1; i <= steps; ++i) {
        std::copy(pi, pi + n, v);
        std::fill(pi, pi + n, 0.0);
        double score = 0.0;
        for (int j = 0;; ++j) {
            const double pj = pois[j], tj = tail[j];
            double dR = 0.0, dC = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double vk = v[k];
                pi[k] += pj * vk;
                dR += vk * rc[k];
                dC += vk * c[k];
            }
            kahanAdd(accum, accumComp, tj * dR);
            score += pj * dC;
            if (j == J) break;
            std::fill(tmp, tmp + n, 0.0);
            for (std::size_t r = 0; r < n; ++r) {
                const double vr = v[r];
                if (vr == 0.0) continue;
                for (std::size_t e = rowPtr[r]; e < rowPtr[r + 1]; ++e)
                    tmp[col[e]] += vr * val[e];
            }
            std::swap(v, tmp);
        }
        const double q = accum + score;
        if (q < best.bestQ) {
            best.bestQ = q;
            best.bestAction = i;
        }
    }
    products += planned;
    return best;
}

NaiveGridResult naiveTransientGrid(const UniformizedChain& chain, std::size_t startLocal,
                                   double delta, std::size_t steps, double kappa,
                                   std::uint64_t productBudget) {
    NaiveGridResult res;
    TransientState start;
    start.pi.assign(chain.numStates, 0.0);
    start.pi[startLocal] = 1.0;

    for (std::size_t i = 1; i <= steps; ++i) {
        auto plan = poissonTruncation(chain.lambda * delta * static_cast<double>(i), kappa);
        res.truncationJs.push_back(plan.J);
        res.products += plan.J;
        if (res.products > productBudget)
            throw ComputeBudgetExceeded("naive grid exceeds product budget", res.products);
        res.states.push_back(transientStep(chain, start, delta * static_cast<double>(i), plan));
    }
    return res;
}

PrecomputedStep precomputeStep(const UniformizedChain& chain, double delta,
                               const TruncationPlan& plan) {
    const std::size_t n = chain.numStates;
    PrecomputedStep out;

    // m = sum_j pois[j] P^j, accumulated through sparse powers
    std::vector<std::map<std::size_t, double>> acc(n), power(n);
    for (std::size_t i = 0; i < n; ++i) power[i][i] = 1.0;
    for (int j = 0;; ++j) {
        for (std::size_t i = 0; i < n; ++i)
            for (const auto& [k, p] : power[i]) acc[i][k] += plan.pois[j] * p;
        if (j == plan.J) break;
        // power = power * P
        std::vector<std::map<std::size_t, double>> next(n);
        for (std::size_t i = 0; i < n; ++i)
            for (const auto& [k, p] : power[i])
                for (std::size_t e = chain.rowPtr[k]; e < chain.rowPtr[k + 1]; ++e)
                    next[i][chain.colIdx[e]] += p * chain.value[e];
        power.swap(next);
        ++out.buildMatMatProducts;
    }
    out.m.resize(n);
    std::size_t nnz = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& [k, p] : acc[i])
            if (p != 0.0) {
                out.m[i].push_back({k, p});
                ++nnz;
            }
    out.density = static_cast<double>(nnz) / (static_cast<double>(n) * static_cast<double>(n));

    // stepReward[i] = sum_j tail_j (P^j (r/lambda + imp))_i
    std::vector<double> c(n), u(n);
    for (std::size_t i = 0; i < n; ++i)
        c[i] = chain.rateReward[i] / chain.lambda + chain.jumpImpulse[i];
    u = c;
    out.stepReward.assign(n, 0.0);
    for (int j = 0;; ++j) {
        for (std::size_t i = 0; i < n; ++i) out.stepReward[i] += plan.tail[j] * u[i];
        if (j == plan.J) break;
        // u = P * u (column vector)
        std::vector<double> next(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t e = chain.rowPtr[i]; e < chain.rowPtr[i + 1]; ++e)
                next[i] += chain.value[e] * u[chain.colIdx[e]];
        u.swap(next);
    }
    return out;
}

PrecomputedWalker::PrecomputedWalker(const UniformizedChain& chain, const PrecomputedStep& step,
                                     std::size_t startLocal, double delta)
    : step_(step), delta_(delta) {
    state_.pi.assign(chain.numStates, 0.0);
    state_.pi[startLocal] = 1.0;
    tmp_.resize(chain.numStates);
}

const TransientState& PrecomputedWalker::advance() {
    kahanAdd(state_.accumulatedReward, rewardComp_, dot(state_.pi, step_.stepReward));
    std::fill(tmp_.begin(), tmp_.end(), 0.0);
    for (std::size_t i = 0; i < state_.pi.size(); ++i) {
        double vi = state_.pi[i];
        if (vi == 0.0) continue;
        for (const auto& [k, p] : step_.m[i]) tmp_[k] += vi * p;
    }
    state_.pi.swap(tmp_);
    state_.elapsed += delta_;
    ++products_;
    return state_;
}

} // namespace fdctmc
