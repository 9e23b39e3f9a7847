#pragma once

#include <stdexcept>
#include <string>

namespace msfnet {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
public:
    using Error::Error;
};

class InvalidShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class EmptyMaskError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class NonFiniteLossError : public Error {
public:
    using Error::Error;
};

} // namespace msfnet
