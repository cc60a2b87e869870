// Command-line front end: model validation, expected reachability reward,
// timeout synthesis, Monte Carlo estimation and transient benchmarking.

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdctmc/lang.hpp"
#include "fdctmc/model.hpp"
#include "fdctmc/reward.hpp"
#include "fdctmc/simulate.hpp"
#include "fdctmc/synthesis.hpp"
#include "fdctmc/transient.hpp"

using json = nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

json finiteOrNull(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

std::string readFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void printReport(const json& j, const std::string& format) {
    if (format == "json") {
        std::cout << j.dump(2) << "\n";
        return;
    }
    // text: flat key/value lines carrying the same numbers
    std::function<void(const json&, const std::string&)> walk = [&](const json& node,
                                                                    const std::string& prefix) {
        if (node.is_object()) {
            for (auto it = node.begin(); it != node.end(); ++it)
                walk(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key());
        } else if (node.is_array()) {
            std::size_t i = 0;
            for (const auto& el : node) walk(el, prefix + "[" + std::to_string(i++) + "]");
        } else if (node.is_number_float()) {
            std::cout << prefix << " = " << fmt(node.get<double>()) << "\n";
        } else {
            std::cout << prefix << " = " << node.dump() << "\n";
        }
    };
    walk(j, "");
}

fdctmc::FdctmcModel loadOrExit(const std::string& path, bool requireTarget) {
    auto source = readFile(path);
    auto res = fdctmc::lang::loadModel(source);
    for (const auto& d : res.diagnostics) std::cerr << d.render() << "\n";
    if (!res.ok()) std::exit(1);
    auto basic = fdctmc::validateBasic(*res.model);
    bool bad = false;
    for (const auto& d : basic) {
        std::cerr << d.render() << "\n";
        if (d.severity == fdctmc::Severity::Error) bad = true;
    }
    if (bad) std::exit(1);
    if (requireTarget && res.model->target.states.empty()) {
        std::cerr << "error: this query needs a 'label \"target\"' in the model\n";
        std::exit(1);
    }
    return std::move(*res.model);
}

unsigned defaultThreads() {
    if (const char* env = std::getenv("FDCTMC_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return 1;
}

json boundsToJson(const fdctmc::DiscretizationBounds& b) {
    return json{{"event", b.eventName},
                {"epsilon", b.epsilon},
                {"valUpper", b.valUpper},
                {"boundSteps", b.boundSteps},
                {"alpha", b.alpha},
                {"d1", b.d1},
                {"upperDelay", b.upperDelay},
                {"step", b.step},
                {"kappa", b.kappa},
                {"actions", b.gridCount},
                {"lambda", b.lambda},
                {"minP", b.minP},
                {"minR", b.minR},
                {"maxR", b.maxR},
                {"regionStates", b.sizeFd},
                {"minOneStepReward", b.minOneStepReward},
                {"decisionStates", b.decisionStateCount}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fdCTMC model checking and timeout synthesis"};
    app.require_subcommand(1);

    std::string modelPath, format = "json";
    double epsilon = 1e-3;
    std::uint64_t budget = fdctmc::TransientWalker::kDefaultProductBudget;
    std::uint64_t runs = 1'000'000, seed = 1, stepCap = fdctmc::kDefaultStepCap;
    unsigned threads = defaultThreads();
    std::size_t maxIterations = 200'000;
    double benchDelta = 0.1, benchKappa = 0.01;
    std::size_t benchSteps = 1000;
    std::string benchEvent, dumpGrid, tracePath, strategy = "iterative";

    auto addCommon = [&](CLI::App* cmd) {
        cmd->add_option("model", modelPath, "model file")->required();
        cmd->add_option("--format", format, "output format: json|text")
            ->check(CLI::IsMember({"json", "text"}));
    };

    auto* vcmd = app.add_subcommand("validate", "check well-formedness and the synthesis restrictions");
    addCommon(vcmd);

    auto* ecmd = app.add_subcommand("exp-reward", "expected total reward until the target set");
    addCommon(ecmd);
    ecmd->add_option("--epsilon", epsilon, "solution precision")->check(CLI::Range(1e-12, 0.999999));
    ecmd->add_option("--budget", budget, "vector-matrix product budget");

    auto* scmd = app.add_subcommand("synthesize", "epsilon-optimal fd delay synthesis");
    addCommon(scmd);
    scmd->add_option("--epsilon", epsilon, "error bound for the synthesized delays")
        ->check(CLI::Range(1e-12, 0.999999));
    scmd->add_option("--budget", budget, "vector-matrix product budget per sweep");
    scmd->add_option("--max-iterations", maxIterations, "value iteration sweep cap");
    scmd->add_option("--strategy", strategy,
                     "transient scheme: iterative, or precomputed (one-step matrix, used per "
                     "event only while its density stays below 25%)")
        ->check(CLI::IsMember({"iterative", "precomputed"}));

    auto* mcmd = app.add_subcommand("simulate", "Monte Carlo estimate of the expected reward");
    addCommon(mcmd);
    mcmd->add_option("--runs", runs, "number of independent runs");
    mcmd->add_option("--seed", seed, "master seed");
    mcmd->add_option("--step-cap", stepCap, "per-run step cap");
    mcmd->add_option("--threads", threads, "worker threads");
    mcmd->add_option("--trace", tracePath, "write one run's trace as CSV to this file");

    auto* bcmd = app.add_subcommand("bench-transient",
                                    "compare naive, iterative and precomputed transient strategies");
    addCommon(bcmd);
    bcmd->add_option("--event", benchEvent, "fd event whose subordinated chain is analyzed");
    bcmd->add_option("--delta", benchDelta, "grid step");
    bcmd->add_option("--steps", benchSteps, "number of grid points");
    bcmd->add_option("--kappa", benchKappa, "total truncation budget");
    bcmd->add_option("--budget", budget, "vector-matrix product budget");
    bcmd->add_option("--dump-grid", dumpGrid, "write the iterative pi grid as CSV to this file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (vcmd->parsed()) {
            auto source = readFile(modelPath);
            auto res = fdctmc::lang::loadModel(source);
            json diags = json::array();
            auto push = [&](const fdctmc::Diagnostic& d) {
                json e{{"severity", d.severity == fdctmc::Severity::Error ? "error" : "warning"},
                       {"message", d.message}};
                if (d.line) e["line"] = *d.line;
                if (d.column) e["column"] = *d.column;
                diags.push_back(e);
                std::cerr << d.render() << "\n";
            };
            bool errors = false;
            for (const auto& d : res.diagnostics) {
                push(d);
                errors |= d.severity == fdctmc::Severity::Error;
            }
            bool restrictionsOk = false;
            if (res.model) {
                for (const auto& d : fdctmc::validateBasic(*res.model)) {
                    push(d);
                    errors = true;
                }
                if (!errors) {
                    auto rc = fdctmc::validateSynthesisRestrictions(*res.model, true);
                    restrictionsOk = rc.ok();
                    for (const auto& d : rc.diagnostics) {
                        push(d);
                        errors = true;
                    }
                }
            } else {
                errors = true;
            }
            json out{{"schema", "fdctmc/validate/1"},
                     {"model", modelPath},
                     {"ok", !errors},
                     {"synthesisRestrictions", restrictionsOk},
                     {"states", res.model ? json(res.model->numStates) : json(nullptr)},
                     {"diagnostics", diags}};
            printReport(out, format);
            return errors ? 1 : 0;
        }

        if (ecmd->parsed()) {
            auto model = loadOrExit(modelPath, true);
            auto res = fdctmc::expectedReward(model, epsilon, budget);
            json infinite = json::array();
            for (auto s : res.infiniteStates) infinite.push_back(model.metadata.stateName(s));
            json out{{"schema", "fdctmc/exp-reward/1"},
                     {"model", modelPath},
                     {"epsilon", epsilon},
                     {"value", finiteOrNull(res.value)},
                     {"infinite", !std::isfinite(res.value)},
                     {"residual", res.residual},
                     {"iterations", res.iterations},
                     {"infiniteStates", infinite}};
            json perState = json::object();
            for (fdctmc::StateId s = 0; s < model.numStates; ++s)
                if (std::isfinite(res.perStateValues[s]))
                    perState[model.metadata.stateName(s)] = res.perStateValues[s];
            out["perState"] = perState;
            printReport(out, format);
            return 0;
        }

        if (scmd->parsed()) {
            auto model = loadOrExit(modelPath, true);
            auto res = fdctmc::synthesize(model, epsilon, budget, maxIterations,
                                          strategy == "precomputed");
            json delays = json::object();
            for (const auto& [name, d] : res.delays) delays[name] = d;
            json bounds = json::array();
            json actionCounts = json::object();
            for (const auto& b : res.perEventBounds) {
                bounds.push_back(boundsToJson(b));
                actionCounts[b.eventName] = b.gridCount;
            }
            json out{{"schema", "fdctmc/synthesize/1"},
                     {"model", modelPath},
                     {"epsilon", epsilon},
                     {"delays", delays},
                     {"value", res.value},
                     {"valUpper", res.valUpper},
                     {"mdpValue", res.mdpValue},
                     {"actionCounts", actionCounts},
                     {"iterations", res.iterations},
                     {"bounds", bounds},
                     {"wallMs",
                      json{{"bounds", res.msBounds}, {"solve", res.msSolve}, {"verify", res.msVerify}}}};
            printReport(out, format);
            return 0;
        }

        if (mcmd->parsed()) {
            auto model = loadOrExit(modelPath, true);
            if (!tracePath.empty()) {
                auto run = fdctmc::simulateRun(model, seed, stepCap, true);
                std::ofstream tf(tracePath);
                tf << "step,state,event,dwell,reward\n";
                double acc = 0.0;
                for (std::size_t i = 0; i < run.steps.size(); ++i) {
                    const auto& st = run.steps[i];
                    acc += st.dwell * model.rewards.rateReward[st.state];
                    tf << i << "," << model.metadata.stateName(st.state) << ","
                       << (st.event == fdctmc::kExpEvent ? std::string("exp")
                                                         : model.fdEvents[st.event].name)
                       << "," << fmt(st.dwell) << "," << fmt(acc) << "\n";
                }
            }
            auto est = fdctmc::estimateExpectedReward(model, runs, seed, stepCap, threads);
            json out{{"schema", "fdctmc/simulate/1"},
                     {"model", modelPath},
                     {"runs", est.runs},
                     {"seed", seed},
                     {"mean", est.mean},
                     {"stdError", est.stdError},
                     {"truncatedRuns", est.truncatedRuns}};
            printReport(out, format);
            return 0;
        }

        if (bcmd->parsed()) {
            auto model = loadOrExit(modelPath, false);
            if (model.fdEvents.empty()) {
                std::cerr << "error: bench-transient needs a model with an fd event\n";
                return 1;
            }
            int eventIdx = benchEvent.empty() ? 0 : model.eventIndex(benchEvent);
            if (eventIdx < 0) {
                std::cerr << "error: unknown fd event '" << benchEvent << "'\n";
                return 1;
            }
            auto ctx = fdctmc::makeFdStepContext(model, eventIdx);
            const auto& chain = ctx.chain;
            using clock = std::chrono::steady_clock;

            auto t0 = clock::now();
            auto sweep = fdctmc::transientSweep(chain, ctx.startLocal, benchDelta, benchSteps,
                                                benchKappa, budget);
            double iterMs = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
            auto perStep = fdctmc::poissonTruncation(chain.lambda * benchDelta,
                                                     benchKappa / static_cast<double>(benchSteps));
            std::uint64_t iterProducts =
                static_cast<std::uint64_t>(perStep.J) * static_cast<std::uint64_t>(benchSteps);

            t0 = clock::now();
            auto naive = fdctmc::naiveTransientGrid(chain, ctx.startLocal, benchDelta, benchSteps,
                                                    benchKappa, budget);
            double naiveMs = std::chrono::duration<double, std::milli>(clock::now() - t0).count();

            t0 = clock::now();
            auto pre = fdctmc::precomputeStep(chain, benchDelta, perStep);
            fdctmc::PrecomputedWalker pw(chain, pre, ctx.startLocal, benchDelta);
            double maxPreDiff = 0.0;
            for (std::size_t i = 0; i < benchSteps; ++i) {
                const auto& ts = pw.advance();
                for (std::size_t k = 0; k < ts.pi.size(); ++k)
                    maxPreDiff = std::max(maxPreDiff, std::abs(ts.pi[k] - sweep[i].pi[k]));
            }
            double preMs = std::chrono::duration<double, std::milli>(clock::now() - t0).count();

            double maxNaiveDiff = 0.0;
            for (std::size_t i = 0; i < benchSteps; ++i)
                for (std::size_t k = 0; k < sweep[i].pi.size(); ++k)
                    maxNaiveDiff =
                        std::max(maxNaiveDiff, std::abs(sweep[i].pi[k] - naive.states[i].pi[k]));

            double pDensity = static_cast<double>(chain.nnz()) /
                              (static_cast<double>(chain.numStates) * chain.numStates);

            if (!dumpGrid.empty()) {
                std::ofstream gf(dumpGrid);
                gf << "t";
                for (std::size_t k = 0; k < chain.numStates; ++k) gf << ",pi" << k;
                gf << ",accumulatedReward\n";
                for (const auto& ts : sweep) {
                    gf << fmt(ts.elapsed);
                    for (double p : ts.pi) gf << "," << fmt(p);
                    gf << "," << fmt(ts.accumulatedReward) << "\n";
                }
            }

            json out{{"schema", "fdctmc/bench-transient/1"},
                     {"model", modelPath},
                     {"event", model.fdEvents[eventIdx].name},
                     {"lambda", chain.lambda},
                     {"delta", benchDelta},
                     {"steps", benchSteps},
                     {"kappa", benchKappa},
                     {"iterative", json{{"products", iterProducts},
                                        {"truncationJ", perStep.J},
                                        {"wallMs", iterMs}}},
                     {"naive", json{{"products", naive.products}, {"wallMs", naiveMs}}},
                     {"precomputed", json{{"stepProducts", pw.productsDone()},
                                          {"buildMatMatProducts", pre.buildMatMatProducts},
                                          {"densityM", pre.density},
                                          {"densityP", pDensity},
                                          {"wallMs", preMs}}},
                     {"agreement", json{{"maxPiDiffIterNaive", maxNaiveDiff},
                                        {"maxPiDiffIterPrecomputed", maxPreDiff}}}};
            printReport(out, format);
            return 0;
        }
    } catch (const fdctmc::ComputeBudgetExceeded& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
