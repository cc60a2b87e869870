#include "fdctmc/lang.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <stdexcept>

namespace fdctmc::lang {

namespace {

std::string num(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, p);
    return s;
}

} // namespace

// Canonical flat form: a single variable `s` enumerating the states, one
// exponential command per state and impulse group, one fd command per
// (event, active state). Impulses are reattached through generated sync
// labels so that re-elaboration reproduces the reward structure.
std::string exportModel(const FdctmcModel& model) {
    if (model.numStates == 0) throw std::invalid_argument("cannot export empty model");

    std::string out = "fdctmc\n\nmodule m\n";
    for (const auto& ev : model.fdEvents)
        out += "  fdelay " + ev.name + " = " + num(ev.delay) + ";\n";
    out += "  s : [0.." + std::to_string(model.numStates - 1) + "] init " +
           std::to_string(model.initialState) + ";\n";

    struct ImpulseItem {
        std::string label;
        StateId source;
        double value;
    };
    std::vector<ImpulseItem> impulseItems;
    int labelCounter = 0;

    // exponential commands, grouped per source by impulse value so each
    // group can carry one sync label
    for (StateId s = 0; s < model.numStates; ++s) {
        const auto& row = model.rateMatrix.row(s);
        if (row.empty()) continue;
        std::map<double, std::vector<std::pair<StateId, double>>> groups;
        for (const auto& [d, r] : row)
            groups[model.rewards.impulse(s, kExpEvent, d)].push_back({d, r});
        for (const auto& [imp, dests] : groups) {
            std::string label;
            if (imp > 0.0) {
                label = "e" + std::to_string(labelCounter++);
                impulseItems.push_back({label, s, imp});
            }
            out += "  [" + label + "] s=" + std::to_string(s) + " -> ";
            bool first = true;
            for (const auto& [d, r] : dests) {
                if (!first) out += " + ";
                first = false;
                out += num(r) + ":(s'=" + std::to_string(d) + ")";
            }
            out += ";\n";
        }
    }

    // fd commands: the reward syntax attaches one impulse per command, so a
    // kernel row needs a destination-uniform impulse
    for (std::size_t f = 0; f < model.fdEvents.size(); ++f) {
        const auto& ev = model.fdEvents[f];
        for (const auto& [s, dist] : ev.kernel) {
            double imp = -1.0;
            for (const auto& [d, p] : dist.entries()) {
                double v = model.rewards.impulse(s, static_cast<int>(f), d);
                if (imp < 0.0) imp = v;
                else if (v != imp)
                    throw std::invalid_argument(
                        "exportModel: fd impulse varies by destination at state " +
                        std::to_string(s) + ", not expressible in the modeling language");
            }
            std::string label;
            if (imp > 0.0) {
                label = "e" + std::to_string(labelCounter++);
                impulseItems.push_back({label, s, imp});
            }
            out += "  [" + label + "] s=" + std::to_string(s) + " --" + ev.name + "-> ";
            bool first = true;
            for (const auto& [d, p] : dist.entries()) {
                if (!first) out += " + ";
                first = false;
                out += num(p) + ":(s'=" + std::to_string(d) + ")";
            }
            out += ";\n";
        }
    }
    out += "endmodule\n";

    if (!model.target.states.empty()) {
        out += "\nlabel \"target\" = ";
        bool first = true;
        for (StateId s : model.target.states) {
            if (!first) out += " | ";
            first = false;
            out += "s=" + std::to_string(s);
        }
        out += ";\n";
    }

    out += "\nrewards\n";
    for (StateId s = 0; s < model.numStates; ++s)
        if (model.rewards.rateReward[s] != 0.0)
            out += "  s=" + std::to_string(s) + " : " + num(model.rewards.rateReward[s]) + ";\n";
    for (const auto& it : impulseItems)
        out += "  [" + it.label + "] s=" + std::to_string(it.source) + " : " + num(it.value) + ";\n";
    out += "endrewards\n";
    return out;
}

} // namespace fdctmc::lang
