#pragma once

#include <stdexcept>
#include <string>

namespace dtmix {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

class InversionFailure : public Error {
public:
    explicit InversionFailure(const std::string& what) : Error(what) {}
};

class SingularCovariance : public Error {
public:
    explicit SingularCovariance(const std::string& what) : Error(what) {}
};

class NonPositiveVariance : public Error {
public:
    explicit NonPositiveVariance(const std::string& what) : Error(what) {}
};

class DegenerateWeights : public Error {
public:
    explicit DegenerateWeights(const std::string& what) : Error(what) {}
};

class ChainDiverged : public Error {
public:
    explicit ChainDiverged(const std::string& what) : Error(what) {}
};

class EmptyDataset : public Error {
public:
    explicit EmptyDataset(const std::string& what) : Error(what) {}
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what) : Error(what) {}
};

class MissingFile : public Error {
public:
    explicit MissingFile(const std::string& what) : Error(what) {}
};

}  // namespace dtmix
