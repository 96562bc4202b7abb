#pragma once

#include <stdexcept>
#include <string>

namespace mrf {

// Shapes disagree (matmul inner dims, elementwise operands, config vs data).
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A documented precondition was violated by the caller.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN / inf showed up where finite values are required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input files.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyDatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A metric whose denominator vanishes (MASE on a flat series, CKA on a constant representation).
class UndefinedMetricError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Checkpoints, manifests or configs that fail to parse or verify.
class CorruptArtifactError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mrf
