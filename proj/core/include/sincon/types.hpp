#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace sincon {

using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Mat = Eigen::MatrixXd;

// Contract violation: bad arguments, mismatched dimensions, values outside
// the documented domain. Carries the offending field/sample in the message.
class ContractError : public std::invalid_argument {
public:
    explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

// A computation produced a non-finite value or could not proceed numerically.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// A requested configuration cannot be satisfied (e.g. CFL sub-step budget).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sincon
