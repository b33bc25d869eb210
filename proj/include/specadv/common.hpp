#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace specadv {

// Exit-code-bearing error categories. The CLI maps these to process exit
// codes; library code throws them directly.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
    static constexpr int exit_code = 2;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
    static constexpr int exit_code = 3;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
    static constexpr int exit_code = 4;
};

constexpr double kPi = 3.141592653589793238462643383279502884;

inline double db_from_power(double p) { return 10.0 * std::log10(p); }
inline double db_from_amplitude(double a) { return 20.0 * std::log10(a); }
inline double power_from_db(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace specadv
