#pragma once

#include <optional>
#include <string>
#include <vector>

namespace fdctmc {

enum class Severity { Error, Warning };

// A single validation or parse finding. Line/column are 1-based and only
// present for findings tied to a source location.
struct Diagnostic {
    Severity severity = Severity::Error;
    std::string message;
    std::optional<int> line;
    std::optional<int> column;

    std::string render() const {
        std::string s = severity == Severity::Error ? "error: " : "warning: ";
        if (line) {
            s += "line " + std::to_string(*line);
            if (column) s += ":" + std::to_string(*column);
            s += ": ";
        }
        return s + message;
    }
};

inline bool has_errors(const std::vector<Diagnostic>& ds) {
    for (const auto& d : ds)
        if (d.severity == Severity::Error) return true;
    return false;
}

} // namespace fdctmc
