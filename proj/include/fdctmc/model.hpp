#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fdctmc/diagnostics.hpp"

namespace fdctmc {

using StateId = std::size_t;

// Event slot used in impulse-reward keys: fd events are identified by their
// index in FdctmcModel::fdEvents, the exponential event by kExpEvent.
inline constexpr int kExpEvent = -1;

inline constexpr double kProbTol = 1e-12; // distribution sum tolerance

// Sparse probability distribution over states. Entries are kept sorted by
// state id and are strictly positive.
class Distribution {
public:
    Distribution() = default;

    void add(StateId s, double p); // accumulates if s already present
    double prob(StateId s) const;
    double sum() const;
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }

    const std::vector<std::pair<StateId, double>>& entries() const { return entries_; }

    bool operator==(const Distribution&) const = default;

private:
    std::vector<std::pair<StateId, double>> entries_;
};

// Sparse rate matrix Q. Row s holds the positive rates of the exponential
// transitions leaving s; E(s) is the row sum (zero rows have no exponential
// event).
class RateMatrix {
public:
    RateMatrix() = default;
    explicit RateMatrix(std::size_t numStates) : rows_(numStates) {}

    void addRate(StateId from, StateId to, double rate); // rates accumulate
    double rate(StateId from, StateId to) const;
    double exitRate(StateId s) const;
    const std::vector<std::pair<StateId, double>>& row(StateId s) const { return rows_[s]; }
    std::size_t numStates() const { return rows_.size(); }

    bool operator==(const RateMatrix&) const = default;

private:
    std::vector<std::vector<std::pair<StateId, double>>> rows_;
};

// Fixed-delay event: deterministic timer of length `delay`, active in
// `activeStates`, firing through `kernel`. `priority` is the rank in the
// total order used to break simultaneous-occurrence ties (lower fires first).
struct FdEvent {
    std::string name;
    double delay = 0.0;
    std::set<StateId> activeStates;
    std::map<StateId, Distribution> kernel; // defined exactly on activeStates
    int priority = 0;

    bool operator==(const FdEvent&) const = default;
};

struct RewardStructure {
    std::vector<double> rateReward; // per state, reward per second
    // (source, event, dest) -> impulse; event is an fd index or kExpEvent
    std::map<std::tuple<StateId, int, StateId>, double> impulseReward;

    double impulse(StateId from, int event, StateId to) const {
        auto it = impulseReward.find({from, event, to});
        return it == impulseReward.end() ? 0.0 : it->second;
    }

    bool operator==(const RewardStructure&) const = default;
};

struct TargetSet {
    std::set<StateId> states;

    bool contains(StateId s) const { return states.count(s) != 0; }
    bool operator==(const TargetSet&) const = default;
};

// Per-state metadata carried through elaboration for reporting: variable
// names and the valuation of each state.
struct ModelMetadata {
    std::vector<std::string> variableNames;
    std::vector<std::vector<int>> stateValuations; // indexed by StateId

    std::string stateName(StateId s) const;
};

struct FdctmcModel {
    std::size_t numStates = 0;
    RateMatrix rateMatrix;
    std::vector<FdEvent> fdEvents;
    StateId initialState = 0;
    RewardStructure rewards;
    TargetSet target;
    ModelMetadata metadata;

    const FdEvent* findEvent(const std::string& name) const;
    int eventIndex(const std::string& name) const; // -1 if unknown
};

// Subordinated CTMC of one fd event: the chain restricted to the event's
// active region (target states excluded), rooted at the event's setting
// state, with an absorbing exit state for every state outside the region
// that an exponential jump can reach. Local indices: region states first,
// then exit states.
struct SubordinatedChain {
    int eventIndex = -1;
    StateId settingState = 0;

    std::vector<StateId> regionStates; // model ids, local index = position
    std::vector<StateId> exitStates;   // model ids of absorbing exits
    std::map<StateId, std::size_t> localIndex; // model id -> local index

    // Exponential transitions of region states in local indices.
    std::vector<std::vector<std::pair<std::size_t, double>>> regionRates;

    // Appendix statistics for the discretization bounds.
    double lambda = 1.0;  // uniformization rate: max exit rate over region
    double minP = 1.0;    // min branching prob (embedded jumps and kernel)
    double minR = 0.0;    // min rate reward over region
    double maxR = 0.0;    // max rate reward over region
    std::size_t sizeFd = 0; // |S_fd| = region size

    std::size_t numLocal() const { return regionStates.size() + exitStates.size(); }
    bool isRegionLocal(std::size_t local) const { return local < regionStates.size(); }
};

// Def. 1 well-formedness: kernel rows sum to one, kernel domain matches the
// activity set, delays positive, target excludes the initial state.
std::vector<Diagnostic> validateBasic(const FdctmcModel& model);

struct RestrictionCheck {
    std::vector<Diagnostic> diagnostics;
    std::map<int, StateId> settingStates; // event index -> unique setting state
    bool ok() const { return !has_errors(diagnostics); }
};

// The four structural restrictions of the synthesis algorithm:
//   R1  at most one fd event active per state
//   R2  per fd event a single state where its timer is (re)started
//   R3  positive rate reward in every state
//   R4  positive impulse on every fd transition with positive probability
// The expected-reward computation needs only R1/R2; pass
// includeRewardRestrictions=false to skip R3/R4.
RestrictionCheck validateSynthesisRestrictions(const FdctmcModel& model,
                                               bool includeRewardRestrictions = true);

// Timer-setting states of one fd event: states where the event's timer is
// newly started, i.e. the initial state if active there, active states
// entered in one step from a state where the event is inactive, and active
// states entered by the event's own firing (the occurred event's timer is
// reset).
std::set<StateId> timerSettingStates(const FdctmcModel& model, int eventIndex);

FdctmcModel applyDelays(const FdctmcModel& model,
                        const std::map<std::string, double>& delays);

SubordinatedChain buildSubordinatedChain(const FdctmcModel& model, int eventIndex);

} // namespace fdctmc
