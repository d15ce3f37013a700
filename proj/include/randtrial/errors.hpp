#pragma once

#include <stdexcept>
#include <string>

namespace randtrial {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A scheme, study, or CLI configuration violates a precondition.
class InvalidConfiguration : public Error {
public:
    using Error::Error;
};

/// Inputs have mismatched lengths or are otherwise malformed.
class InvalidInput : public Error {
public:
    using Error::Error;
};

class EnumerationTooLarge : public Error {
public:
    using Error::Error;
};

/// A treatment arm is empty, or too small for the requested statistic.
class DegenerateArm : public Error {
public:
    using Error::Error;
};

/// Fewer than one residual degree of freedom after dropping collinear columns.
class UnidentifiableModel : public Error {
public:
    using Error::Error;
};

}  // namespace randtrial
