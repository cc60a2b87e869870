#pragma once

#include <cstddef>
#include <vector>

namespace fdctmc {

// Qualitative almost-sure reachability on an MDP given by per-state action
// supports: returns the states from which SOME policy reaches the target set
// with probability 1 (the standard greatest-least fixpoint). Target states
// are always included; states without actions are kept only if they are
// targets. A Markov chain is the one-action-per-state special case.
inline std::vector<bool> prob1eStates(
    const std::vector<std::vector<std::vector<std::size_t>>>& actionSupports,
    const std::vector<bool>& target) {
    const std::size_t n = actionSupports.size();
    std::vector<bool> z(n, true); // candidate set, shrinks to the fixpoint

    while (true) {
        // inner least fixpoint: can reach target via actions staying inside z
        std::vector<bool> y = target;
        bool grew = true;
        while (grew) {
            grew = false;
            for (std::size_t s = 0; s < n; ++s) {
                if (y[s]) continue;
                for (const auto& support : actionSupports[s]) {
                    if (support.empty()) continue;
                    bool staysInZ = true, hitsY = false;
                    for (std::size_t d : support) {
                        if (!z[d]) { staysInZ = false; break; }
                        if (y[d]) hitsY = true;
                    }
                    if (staysInZ && hitsY) {
                        y[s] = true;
                        grew = true;
                        break;
                    }
                }
            }
        }
        if (y == z) return z;
        z = std::move(y);
    }
}

} // namespace fdctmc
