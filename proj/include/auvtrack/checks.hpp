#pragma once

#include <string>
#include <vector>

namespace auvtrack {

/// Outcome of one numerical property check.
struct CheckResult {
    std::string suite;
    std::string name;
    bool passed = false;
    double value = 0.0;  // measured quantity (error, radius, ...)
    std::string detail;
};

/// sonar, laplacian, gradient, lemma1
std::vector<std::string> check_suites();

/// Runs one suite against oracles that are computed independently of the
/// production code path. Throws ConfigError for an unknown suite name.
std::vector<CheckResult> run_check_suite(const std::string& suite);

}  // namespace auvtrack
