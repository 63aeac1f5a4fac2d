#pragma once

#include <array>
#include <string>

#include "cmdrisk/error.hpp"

namespace cmdrisk {

// Class order is fixed: confusion matrices, probability triples and file
// formats all index by this order.
enum class RiskClass : int { SAFE = 0, RISKY = 1, BLOCKED = 2 };

constexpr int kNumRiskClasses = 3;

inline const char* to_string(RiskClass r) {
    switch (r) {
        case RiskClass::SAFE: return "SAFE";
        case RiskClass::RISKY: return "RISKY";
        case RiskClass::BLOCKED: return "BLOCKED";
    }
    return "?";
}

inline RiskClass risk_from_string(const std::string& s) {
    if (s == "SAFE") return RiskClass::SAFE;
    if (s == "RISKY") return RiskClass::RISKY;
    if (s == "BLOCKED") return RiskClass::BLOCKED;
    throw ParseError("unknown risk class '" + s + "'");
}

// True if a is more dangerous than b (BLOCKED > RISKY > SAFE).
inline bool more_dangerous(RiskClass a, RiskClass b) {
    return static_cast<int>(a) > static_cast<int>(b);
}

// Argmax over a score triple; ties resolve toward the more dangerous class.
inline RiskClass argmax_danger(const std::array<double, 3>& scores) {
    int best = 2;
    for (int c = 1; c >= 0; --c) {
        if (scores[c] > scores[best]) best = c;
    }
    return static_cast<RiskClass>(best);
}

}  // namespace cmdrisk
