#include <doctest.h>

#include <cmath>

#include "fdctmc/reward.hpp"
#include "fdctmc/transient.hpp"
#include "helpers.hpp"

using namespace fdctmc;
using testutil::loadBundled;
using testutil::randomChain;

namespace {

// region {A} exiting to absorbing B at rate 1; pi(t) = (e^-t, 1-e^-t)
UniformizedChain abChain(double rateRewardA = 1.0) {
    UniformizedChain uc;
    uc.numRegion = 1;
    uc.numStates = 2;
    uc.lambda = 1.0;
    uc.rowPtr = {0};
    uc.addRow({{1, 1.0}});
    uc.addRow({{1, 1.0}});
    uc.rateReward = {rateRewardA, 0.0};
    uc.jumpImpulse = {0.0, 0.0};
    return uc;
}

} // namespace

TEST_CASE("poisson truncation picks the smallest sufficient J") {
    SUBCASE("lambda*delta = 1, eps = 0.01 needs J = 4") {
        auto plan = poissonTruncation(1.0, 0.01);
        CHECK(plan.J == 4);
        // the tail after 3 is ~0.0190, after 4 ~0.00366
        CHECK(plan.tail[3] > 0.01);
        CHECK(plan.tail[4] <= 0.01);
        CHECK(plan.tail[4] == doctest::Approx(0.00366).epsilon(0.01));
    }
    SUBCASE("lambda*delta = 0 is a point mass at zero jumps") {
        auto plan = poissonTruncation(0.0, 0.01);
        CHECK(plan.J == 0);
        CHECK(plan.pois[0] == 1.0);
    }
    SUBCASE("the paper grid: 1000 steps of 0.1 at rate 1 with kappa 0.01 gives J = 3") {
        auto plan = poissonTruncation(0.1, 0.01 / 1000.0);
        CHECK(plan.J == 3);
    }
    SUBCASE("weights are a probability distribution") {
        for (double ld : {0.01, 0.5, 3.0, 40.0, 2000.0}) {
            auto plan = poissonTruncation(ld, 1e-12);
            double sum = 0.0;
            for (double w : plan.pois) sum += w;
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
        }
    }
    SUBCASE("invalid eps rejected") {
        CHECK_THROWS_AS(poissonTruncation(1.0, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(poissonTruncation(1.0, 1.0), std::invalid_argument);
    }
}

TEST_CASE("two-state chain transient matches the closed form at t = 1") {
    auto chain = abChain();
    auto states = transientSweep(chain, 0, 1.0, 1, 1e-12);
    REQUIRE(states.size() == 1);
    CHECK(states[0].pi[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-8));
    CHECK(states[0].pi[1] == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-8));
    // int_0^1 e^-t dt = 1 - e^-1
    CHECK(states[0].accumulatedReward == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-8));
}

TEST_CASE("a region without exponential exits keeps pi and accrues dwell reward") {
    // zero exit rates floor lambda to 1; the uniformization self-loop moves
    // no mass and the reward integral reduces to rate * delta
    UniformizedChain uc;
    uc.numRegion = 1;
    uc.numStates = 1;
    uc.lambda = 1.0;
    uc.rowPtr = {0};
    uc.addRow({{0, 1.0}});
    uc.rateReward = {2.0};
    uc.jumpImpulse = {0.0};

    TransientState start;
    start.pi = {1.0};
    auto next = transientStep(uc, start, 0.25, poissonTruncation(0.25, 1e-12));
    CHECK(next.pi[0] == doctest::Approx(1.0));
    CHECK(next.accumulatedReward == doctest::Approx(2.0 * 0.25).epsilon(1e-10));

    // a zero-length step is the degenerate point mass at zero jumps
    auto frozen = transientStep(uc, start, 0.0, poissonTruncation(0.0, 0.5));
    CHECK(frozen.pi[0] == 1.0);
    CHECK(frozen.accumulatedReward == 0.0);
}

TEST_CASE("deterministic region accrues reward delta per step through the integral") {
    // no exponential exits: lambda floored to 1, the reward integral must
    // still equal rate * elapsed
    auto m = loadBundled("toy_single.fdctmc");
    auto ctx = makeFdStepContext(m, 0);
    auto states = transientSweep(ctx.chain, ctx.startLocal, 0.5, 4, 1e-10);
    CHECK(states[3].pi[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(states[3].accumulatedReward == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("iterating ten steps equals one single-point evaluation") {
    auto chain = abChain();
    auto sweep = transientSweep(chain, 0, 0.1, 10, 1e-10);
    auto single = transientSweep(chain, 0, 1.0, 1, 1e-10);
    for (std::size_t k = 0; k < 2; ++k)
        CHECK(sweep[9].pi[k] == doctest::Approx(single[0].pi[k]).epsilon(1e-8));
    CHECK(sweep[9].accumulatedReward ==
          doctest::Approx(single[0].accumulatedReward).epsilon(1e-8));
}

TEST_CASE("walker and free-function step agree") {
    auto chain = abChain();
    TransientWalker w(chain, 0, 0.2, 5, 1e-9);
    TransientState manual;
    manual.pi = {1.0, 0.0};
    auto plan = poissonTruncation(chain.lambda * 0.2, 1e-9 / 5);
    for (int i = 0; i < 5; ++i) {
        const auto& ws = w.advance();
        manual = transientStep(chain, manual, 0.2, plan);
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(ws.pi[k] == doctest::Approx(manual.pi[k]).epsilon(1e-13));
        CHECK(ws.accumulatedReward == doctest::Approx(manual.accumulatedReward).epsilon(1e-12));
    }
}

TEST_CASE("paper step counts: 3000 iterative products, naive at least 10x more") {
    auto m = loadBundled("ab.fdctmc");
    auto ctx = makeFdStepContext(m, 0);
    REQUIRE(ctx.chain.lambda == doctest::Approx(1.0));

    TransientWalker w(ctx.chain, ctx.startLocal, 0.1, 1000, 0.01);
    CHECK(w.truncationJ() == 3);
    CHECK(w.productsPlanned() == 3000);
    for (int i = 0; i < 1000; ++i) w.advance();
    CHECK(w.productsDone() == 3000);

    auto naive = naiveTransientGrid(ctx.chain, ctx.startLocal, 0.1, 1000, 0.01);
    CHECK(naive.products >= 30000);

    // per-point truncation depths grow with the horizon
    for (std::size_t i = 1; i < naive.truncationJs.size(); ++i)
        CHECK(naive.truncationJs[i] >= naive.truncationJs[i - 1]);

    // the two grids agree within 2 kappa everywhere
    auto sweep = transientSweep(ctx.chain, ctx.startLocal, 0.1, 1000, 0.01);
    for (std::size_t i = 0; i < 1000; ++i)
        for (std::size_t k = 0; k < ctx.chain.numStates; ++k)
            CHECK(std::abs(sweep[i].pi[k] - naive.states[i].pi[k]) <= 0.02);
}

TEST_CASE("a one-point naive grid is exactly the single-point formula") {
    auto chain = abChain();
    auto naive = naiveTransientGrid(chain, 0, 0.7, 1, 1e-9);
    TransientState start;
    start.pi = {1.0, 0.0};
    auto direct = transientStep(chain, start, 0.7, poissonTruncation(0.7, 1e-9));
    CHECK(naive.states[0].pi[0] == direct.pi[0]);
    CHECK(naive.states[0].accumulatedReward == direct.accumulatedReward);
}

TEST_CASE("sweep and naive grid agree within 2 kappa on random chains") {
    const double kappa = 1e-6;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        CAPTURE(seed);
        auto chain = randomChain(seed, 5, 2);
        const std::size_t steps = 12;
        const double delta = 0.17;
        auto sweep = transientSweep(chain, 0, delta, steps, kappa);
        auto naive = naiveTransientGrid(chain, 0, delta, steps, kappa);
        for (std::size_t i = 0; i < steps; ++i) {
            double sum = 0.0;
            for (std::size_t k = 0; k < chain.numStates; ++k) {
                CHECK(std::abs(sweep[i].pi[k] - naive.states[i].pi[k]) <= 2 * kappa);
                sum += sweep[i].pi[k];
            }
            // probability conservation up to the spent truncation budget
            CHECK(std::abs(1.0 - sum) <= (i + 1) * kappa / steps + 1e-12);
            if (i > 0)
                CHECK(sweep[i].accumulatedReward >= sweep[i - 1].accumulatedReward);
        }
        // reward bounded by maxR * elapsed plus the impulse rate bound
        double maxR = 0.0, maxImp = 0.0;
        for (std::size_t k = 0; k < chain.numStates; ++k) {
            maxR = std::max(maxR, chain.rateReward[k]);
            maxImp = std::max(maxImp, chain.jumpImpulse[k]);
        }
        double horizon = steps * delta;
        CHECK(sweep.back().accumulatedReward <=
              maxR * horizon + maxImp * chain.lambda * horizon + 1e-9);
    }
}

TEST_CASE("precomputed step matrix reproduces the sweep and fills in") {
    SUBCASE("agreement on random chains") {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            CAPTURE(seed);
            auto chain = randomChain(seed, 4, 2);
            const double delta = 0.3;
            const std::size_t steps = 8;
            auto plan = poissonTruncation(chain.lambda * delta, 1e-9 / steps);
            auto pre = precomputeStep(chain, delta, plan);
            PrecomputedWalker pw(chain, pre, 0, delta);
            auto sweep = transientSweep(chain, 0, delta, steps, 1e-9);
            for (std::size_t i = 0; i < steps; ++i) {
                const auto& ts = pw.advance();
                for (std::size_t k = 0; k < chain.numStates; ++k)
                    CHECK(std::abs(ts.pi[k] - sweep[i].pi[k]) <= 1e-10);
                CHECK(std::abs(ts.accumulatedReward - sweep[i].accumulatedReward) <= 1e-9);
            }
        }
    }

    SUBCASE("directed cycle fills in: nnz(M) exceeds nnz(P)") {
        // cycle 0 -> 1 -> ... -> 5 -> 0 at rate 1: P has one entry per row,
        // P^j shifts by j, so M gains a diagonal per truncation level
        UniformizedChain uc;
        uc.numRegion = 6;
        uc.numStates = 6;
        uc.lambda = 1.0;
        uc.rowPtr = {0};
        for (std::size_t i = 0; i < 6; ++i) uc.addRow({{(i + 1) % 6, 1.0}});
        uc.rateReward.assign(6, 1.0);
        uc.jumpImpulse.assign(6, 0.0);

        auto plan = poissonTruncation(1.0 * 0.5, 1e-10);
        REQUIRE(plan.J >= 3);
        auto pre = precomputeStep(uc, 0.5, plan);
        CHECK(pre.nnz() > uc.nnz());
        CHECK(pre.density > static_cast<double>(uc.nnz()) / 36.0);
    }
}

TEST_CASE("compute budget violations are reported, not truncated") {
    auto chain = abChain();
    CHECK_THROWS_AS(transientSweep(chain, 0, 0.1, 1000, 0.01, /*budget=*/100),
                    ComputeBudgetExceeded);
    CHECK_THROWS_AS(naiveTransientGrid(chain, 0, 0.1, 1000, 0.01, /*budget=*/100),
                    ComputeBudgetExceeded);
    try {
        transientSweep(chain, 0, 0.1, 1000, 0.01, 100);
    } catch (const ComputeBudgetExceeded& e) {
        CHECK(e.products == 3000);
    }
}
