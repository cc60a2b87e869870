#include "fdctmc/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fdctmc {

void Distribution::add(StateId s, double p) {
    if (p <= 0.0) throw std::invalid_argument("distribution entries must be positive");
    auto it = std::lower_bound(entries_.begin(), entries_.end(), s,
                               [](const auto& e, StateId v) { return e.first < v; });
    if (it != entries_.end() && it->first == s)
        it->second += p;
    else
        entries_.insert(it, {s, p});
}

double Distribution::prob(StateId s) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), s,
                               [](const auto& e, StateId v) { return e.first < v; });
    return (it != entries_.end() && it->first == s) ? it->second : 0.0;
}

double Distribution::sum() const {
    double t = 0.0;
    for (const auto& [s, p] : entries_) t += p;
    return t;
}

void RateMatrix::addRate(StateId from, StateId to, double rate) {
    if (rate <= 0.0) throw std::invalid_argument("rates must be positive");
    if (from >= rows_.size()) throw std::out_of_range("rate matrix row");
    auto& row = rows_[from];
    auto it = std::lower_bound(row.begin(), row.end(), to,
                               [](const auto& e, StateId v) { return e.first < v; });
    if (it != row.end() && it->first == to)
        it->second += rate;
    else
        row.insert(it, {to, rate});
}

double RateMatrix::rate(StateId from, StateId to) const {
    for (const auto& [s, r] : rows_[from])
        if (s == to) return r;
    return 0.0;
}

double RateMatrix::exitRate(StateId s) const {
    double t = 0.0;
    for (const auto& [d, r] : rows_[s]) t += r;
    return t;
}

std::string ModelMetadata::stateName(StateId s) const {
    if (s >= stateValuations.size()) return "s" + std::to_string(s);
    std::string out = "(";
    const auto& val = stateValuations[s];
    for (std::size_t i = 0; i < val.size(); ++i) {
        if (i) out += ",";
        out += (i < variableNames.size() ? variableNames[i] : "v" + std::to_string(i));
        out += "=" + std::to_string(val[i]);
    }
    return out + ")";
}

const FdEvent* FdctmcModel::findEvent(const std::string& name) const {
    for (const auto& e : fdEvents)
        if (e.name == name) return &e;
    return nullptr;
}

int FdctmcModel::eventIndex(const std::string& name) const {
    for (std::size_t i = 0; i < fdEvents.size(); ++i)
        if (fdEvents[i].name == name) return static_cast<int>(i);
    return -1;
}

std::vector<Diagnostic> validateBasic(const FdctmcModel& model) {
    std::vector<Diagnostic> out;
    auto err = [&](std::string m) { out.push_back({Severity::Error, std::move(m), {}, {}}); };

    if (model.numStates == 0) {
        err("model has no states");
        return out;
    }
    if (model.initialState >= model.numStates) err("initial state out of range");
    if (model.rateMatrix.numStates() != model.numStates) err("rate matrix size mismatch");
    if (model.rewards.rateReward.size() != model.numStates) err("rate reward vector size mismatch");

    for (const auto& ev : model.fdEvents) {
        if (!(ev.delay > 0.0))
            err("fd event '" + ev.name + "': delay must be positive");
        for (StateId s : ev.activeStates)
            if (!ev.kernel.count(s))
                err("fd event '" + ev.name + "': no kernel row for active state " +
                    model.metadata.stateName(s));
        for (const auto& [s, dist] : ev.kernel) {
            if (!ev.activeStates.count(s))
                err("fd event '" + ev.name + "': kernel row for inactive state " +
                    model.metadata.stateName(s));
            double sum = dist.sum();
            if (std::abs(sum - 1.0) > kProbTol)
                err("fd event '" + ev.name + "': kernel row at " + model.metadata.stateName(s) +
                    " sums to " + std::to_string(sum));
            for (const auto& [d, p] : dist.entries())
                if (d >= model.numStates)
                    err("fd event '" + ev.name + "': kernel destination out of range");
        }
    }

    for (double r : model.rewards.rateReward)
        if (r < 0.0) err("negative rate reward");
    for (const auto& [key, v] : model.rewards.impulseReward)
        if (v < 0.0) err("negative impulse reward");

    if (model.target.contains(model.initialState))
        err("target set contains the initial state");
    for (StateId s : model.target.states)
        if (s >= model.numStates) err("target state out of range");

    return out;
}

std::set<StateId> timerSettingStates(const FdctmcModel& model, int eventIndex) {
    const auto& ev = model.fdEvents[eventIndex];
    std::set<StateId> setting;
    auto active = [&](StateId s) { return ev.activeStates.count(s) != 0; };

    if (active(model.initialState)) setting.insert(model.initialState);

    for (StateId s = 0; s < model.numStates; ++s) {
        bool sourceActive = active(s);
        if (!sourceActive) {
            // one exponential or fd step from a state where the event is inactive
            for (const auto& [d, r] : model.rateMatrix.row(s))
                if (active(d)) setting.insert(d);
            for (const auto& other : model.fdEvents) {
                auto it = other.kernel.find(s);
                if (it == other.kernel.end()) continue;
                for (const auto& [d, p] : it->second.entries())
                    if (active(d)) setting.insert(d);
            }
        } else {
            // the occurred event's timer is reset, so the event's own firing
            // into its active set starts the timer as well
            auto it = ev.kernel.find(s);
            if (it != ev.kernel.end())
                for (const auto& [d, p] : it->second.entries())
                    if (active(d)) setting.insert(d);
        }
    }
    return setting;
}

RestrictionCheck validateSynthesisRestrictions(const FdctmcModel& model, bool includeRewardRestrictions) {
    RestrictionCheck res;
    auto err = [&](std::string m) {
        res.diagnostics.push_back({Severity::Error, std::move(m), {}, {}});
    };

    // R1: at most one concurrently active fd event
    for (StateId s = 0; s < model.numStates; ++s) {
        int count = 0;
        for (const auto& ev : model.fdEvents)
            if (ev.activeStates.count(s)) ++count;
        if (count > 1)
            err("R1: state " + model.metadata.stateName(s) + " has " + std::to_string(count) +
                " concurrently active fd events");
    }

    // R2: a single timer-setting state per fd event
    for (std::size_t f = 0; f < model.fdEvents.size(); ++f) {
        const auto& ev = model.fdEvents[f];
        if (ev.activeStates.empty()) {
            err("R2: fd event '" + ev.name + "' has no active states");
            continue;
        }
        auto setting = timerSettingStates(model, static_cast<int>(f));
        if (setting.size() == 1) {
            res.settingStates[static_cast<int>(f)] = *setting.begin();
        } else if (setting.empty()) {
            err("R2: fd event '" + ev.name + "' has no reachable timer-setting state");
        } else {
            std::string list;
            for (StateId s : setting) list += " " + model.metadata.stateName(s);
            err("R2: fd event '" + ev.name + "' has " + std::to_string(setting.size()) +
                " timer-setting states:" + list);
        }
    }

    if (!includeRewardRestrictions) return res;

    // R3: positive rate reward everywhere
    for (StateId s = 0; s < model.numStates; ++s)
        if (!(model.rewards.rateReward[s] > 0.0))
            err("R3: state " + model.metadata.stateName(s) + " has zero rate reward");

    // R4: positive impulse on every fd transition
    for (std::size_t f = 0; f < model.fdEvents.size(); ++f) {
        const auto& ev = model.fdEvents[f];
        for (const auto& [s, dist] : ev.kernel)
            for (const auto& [d, p] : dist.entries())
                if (!(model.rewards.impulse(s, static_cast<int>(f), d) > 0.0))
                    err("R4: fd transition " + model.metadata.stateName(s) + " --" + ev.name +
                        "-> " + model.metadata.stateName(d) + " has zero impulse reward");
    }

    return res;
}

FdctmcModel applyDelays(const FdctmcModel& model, const std::map<std::string, double>& delays) {
    FdctmcModel out = model;
    for (auto& ev : out.fdEvents) {
        auto it = delays.find(ev.name);
        if (it == delays.end())
            throw std::invalid_argument("applyDelays: missing delay for fd event '" + ev.name + "'");
        if (!(it->second > 0.0))
            throw std::invalid_argument("applyDelays: non-positive delay for fd event '" + ev.name + "'");
        ev.delay = it->second;
    }
    if (delays.size() != out.fdEvents.size())
        throw std::invalid_argument("applyDelays: delay map names an unknown fd event");
    return out;
}

SubordinatedChain buildSubordinatedChain(const FdctmcModel& model, int eventIndex) {
    const auto& ev = model.fdEvents.at(eventIndex);
    if (ev.activeStates.empty())
        throw std::invalid_argument("fd event '" + ev.name + "' has no active states");

    SubordinatedChain sc;
    sc.eventIndex = eventIndex;

    auto setting = timerSettingStates(model, eventIndex);
    if (setting.size() != 1)
        throw std::invalid_argument("fd event '" + ev.name + "' does not have a unique setting state");
    sc.settingState = *setting.begin();

    // Region: active states with target states carved out (reward accumulation
    // stops at the target, so a target inside the region absorbs like an exit).
    for (StateId s : ev.activeStates)
        if (!model.target.contains(s)) sc.regionStates.push_back(s);
    sc.sizeFd = sc.regionStates.size();
    for (std::size_t i = 0; i < sc.regionStates.size(); ++i)
        sc.localIndex[sc.regionStates[i]] = i;

    // Exits: one absorbing state per outside destination of a region jump.
    for (StateId s : sc.regionStates)
        for (const auto& [d, r] : model.rateMatrix.row(s))
            if (!sc.localIndex.count(d)) {
                sc.localIndex[d] = sc.regionStates.size() + sc.exitStates.size();
                sc.exitStates.push_back(d);
            }

    sc.regionRates.resize(sc.regionStates.size());
    double maxExit = 0.0;
    double minP = 1.0;
    bool anyProb = false;
    for (std::size_t i = 0; i < sc.regionStates.size(); ++i) {
        StateId s = sc.regionStates[i];
        double exitRate = model.rateMatrix.exitRate(s);
        maxExit = std::max(maxExit, exitRate);
        for (const auto& [d, r] : model.rateMatrix.row(s)) {
            sc.regionRates[i].push_back({sc.localIndex.at(d), r});
            minP = std::min(minP, r / exitRate);
            anyProb = true;
        }
        auto it = ev.kernel.find(s);
        if (it != ev.kernel.end())
            for (const auto& [d, p] : it->second.entries()) {
                minP = std::min(minP, p);
                anyProb = true;
            }
    }

    sc.lambda = maxExit > 0.0 ? maxExit : 1.0; // degenerate region: point mass at j=0
    sc.minP = anyProb ? minP : 1.0;

    double minR = std::numeric_limits<double>::infinity(), maxR = 0.0;
    for (StateId s : sc.regionStates) {
        minR = std::min(minR, model.rewards.rateReward[s]);
        maxR = std::max(maxR, model.rewards.rateReward[s]);
    }
    sc.minR = sc.regionStates.empty() ? 0.0 : minR;
    sc.maxR = maxR;
    return sc;
}

} // namespace fdctmc
