#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace momlab {

class Error : public std::runtime_error {
   public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension or precondition mismatch at a public entry point.
class ContractViolation : public Error {
   public:
    explicit ContractViolation(const std::string& msg) : Error("contract violation: " + msg) {}
};

class EvaluationFailure : public Error {
   public:
    explicit EvaluationFailure(const std::string& msg) : Error("evaluation failure: " + msg) {}
};

class NumericalFailure : public Error {
   public:
    NumericalFailure(const std::string& msg, std::size_t iterations = 0)
        : Error("numerical failure: " + msg), iterations_(iterations) {}
    std::size_t iterations() const noexcept { return iterations_; }

   private:
    std::size_t iterations_;
};

class InvalidHyperparameter : public Error {
   public:
    explicit InvalidHyperparameter(const std::string& msg) : Error("invalid hyperparameter: " + msg) {}
};

class DomainError : public Error {
   public:
    explicit DomainError(const std::string& msg) : Error("domain error: " + msg) {}
};

class ModelMismatch : public Error {
   public:
    explicit ModelMismatch(const std::string& msg) : Error("model mismatch: " + msg) {}
};

class ProjectionFailure : public Error {
   public:
    ProjectionFailure(const std::string& msg, std::size_t steps)
        : Error("projection failure: " + msg), steps_(steps) {}
    std::size_t steps() const noexcept { return steps_; }

   private:
    std::size_t steps_;
};

class InstabilityError : public Error {
   public:
    InstabilityError(const std::string& msg, std::vector<double> offending)
        : Error("instability: " + msg), offending_(std::move(offending)) {}
    const std::vector<double>& offending_eigenvalues() const noexcept { return offending_; }

   private:
    std::vector<double> offending_;
};

class InsufficientData : public Error {
   public:
    explicit InsufficientData(const std::string& msg) : Error("insufficient data: " + msg) {}
};

class UnboundedTimescale : public Error {
   public:
    explicit UnboundedTimescale(const std::string& msg) : Error("unbounded timescale: " + msg) {}
};

class FormatError : public Error {
   public:
    explicit FormatError(const std::string& msg) : Error("format error: " + msg) {}
};

// Config problems carry the 1-based source position when known (0 otherwise).
class ConfigError : public Error {
   public:
    ConfigError(const std::string& msg, int line = 0, int column = 0)
        : Error(format(msg, line, column)), line_(line), column_(column) {}
    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

   private:
    static std::string format(const std::string& msg, int line, int column) {
        if (line <= 0) return "config error: " + msg;
        return "config error at line " + std::to_string(line) + ", column " +
               std::to_string(column) + ": " + msg;
    }
    int line_;
    int column_;
};

}  // namespace momlab
