#pragma once

#include <stdexcept>
#include <string>

namespace jsqlab {

struct SubsetExplosion : std::runtime_error {
    explicit SubsetExplosion(const std::string& msg) : std::runtime_error(msg) {}
};

struct NotConverged : std::runtime_error {
    double max_excess;
    explicit NotConverged(double excess)
        : std::runtime_error("routing solver iteration budget exhausted, max excess " +
                             std::to_string(excess)),
          max_excess(excess) {}
};

struct InvalidPermutation : std::invalid_argument {
    explicit InvalidPermutation(const std::string& msg) : std::invalid_argument(msg) {}
};

struct ConstructionFailed : std::runtime_error {
    explicit ConstructionFailed(const std::string& msg) : std::runtime_error(msg) {}
};

struct ExactModeUnavailable : std::runtime_error {
    explicit ExactModeUnavailable(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidInitialState : std::invalid_argument {
    explicit InvalidInitialState(const std::string& msg) : std::invalid_argument(msg) {}
};

struct EventBudgetExceeded : std::runtime_error {
    explicit EventBudgetExceeded(const std::string& msg) : std::runtime_error(msg) {}
};

struct UnstableRun : std::runtime_error {
    explicit UnstableRun(const std::string& msg) : std::runtime_error(msg) {}
};

struct StrictViolation : std::runtime_error {
    explicit StrictViolation(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace jsqlab
