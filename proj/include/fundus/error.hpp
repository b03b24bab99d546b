#pragma once

#include <stdexcept>
#include <string>

namespace fundus {

// Base of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid caller-supplied argument (unknown layer, bad class index, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Structurally invalid configuration, e.g. an input too small for the backbone.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Well-formed input whose content violates a contract (bad label, probs not summing to 1).
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace fundus
