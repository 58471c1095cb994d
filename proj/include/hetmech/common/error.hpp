#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hetmech {

/// Process exit codes shared by the CLI.
enum class ExitCode : int { ok = 0, failure = 1, config = 2, solver = 3 };

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual ExitCode exit_code() const noexcept { return ExitCode::failure; }
};

/// Invalid configuration; `field()` names the offending entry.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& why)
        : Error("configuration error [" + field + "]: " + why), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }
    ExitCode exit_code() const noexcept override { return ExitCode::config; }

private:
    std::string field_;
};

class ArgumentError : public Error {
public:
    explicit ArgumentError(const std::string& what) : Error("argument error: " + what) {}
    ExitCode exit_code() const noexcept override { return ExitCode::config; }
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error("format error: " + what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("i/o error: " + what) {}
};

/// Base for numerical failures inside a solver or trainer.
class SolverError : public Error {
public:
    explicit SolverError(const std::string& what) : Error(what) {}
    ExitCode exit_code() const noexcept override { return ExitCode::solver; }
};

/// Cahn-Hilliard nonlinear/linear non-convergence.
class StepError : public SolverError {
public:
    StepError(long step, double residual, const std::string& why)
        : SolverError("step " + std::to_string(step) + " failed (residual " +
                      std::to_string(residual) + "): " + why),
          step_(step), residual_(residual) {}
    long step() const noexcept { return step_; }
    double residual() const noexcept { return residual_; }

private:
    long step_;
    double residual_;
};

class ConvergenceError : public SolverError {
public:
    ConvergenceError(double last_converged_d, const std::string& why)
        : SolverError("newton did not converge (last converged d = " +
                      std::to_string(last_converged_d) + "): " + why),
          last_d_(last_converged_d) {}
    double last_converged_d() const noexcept { return last_d_; }

private:
    double last_d_;
};

class InversionError : public SolverError {
public:
    InversionError(long element, double det)
        : SolverError("element " + std::to_string(element) +
                      " inverted (det F = " + std::to_string(det) + ")"),
          element_(element) {}
    explicit InversionError(double det)
        : SolverError("deformation gradient inverted (det F = " + std::to_string(det) + ")"),
          element_(-1) {}
    long element() const noexcept { return element_; }

private:
    long element_;
};

class DivergenceError : public SolverError {
public:
    DivergenceError(std::string parameter, const std::string& why)
        : SolverError("training diverged at '" + parameter + "': " + why),
          parameter_(std::move(parameter)) {}
    const std::string& parameter() const noexcept { return parameter_; }

private:
    std::string parameter_;
};

class ArchitectureError : public Error {
public:
    explicit ArchitectureError(const std::string& what) : Error("architecture error: " + what) {}
    ExitCode exit_code() const noexcept override { return ExitCode::config; }
};

class CapacityError : public Error {
public:
    CapacityError(const std::string& pool, std::size_t requested, std::size_t available)
        : Error("pool '" + pool + "' has " + std::to_string(available) + " entries, " +
                std::to_string(requested) + " requested") {}
    ExitCode exit_code() const noexcept override { return ExitCode::config; }
};

class LeakageError : public Error {
public:
    explicit LeakageError(const std::string& what) : Error("split leakage: " + what) {}
};

class NumericalDomainError : public Error {
public:
    explicit NumericalDomainError(const std::string& what) : Error("numerical domain: " + what) {}
};

class SampleSizeError : public Error {
public:
    SampleSizeError(std::size_t have, std::size_t need)
        : Error("need at least " + std::to_string(need) + " samples, got " +
                std::to_string(have)) {}
};

class UndefinedMetricError : public Error {
public:
    explicit UndefinedMetricError(const std::string& what) : Error("undefined metric: " + what) {}
};

/// Error raised by a pipeline stage, annotated with where it happened.
class StageError : public Error {
public:
    StageError(std::string stage, std::string config_hash, std::string partial_dir,
               const Error& cause)
        : Error("stage '" + stage + "' failed (config " + config_hash + ", partial outputs in " +
                partial_dir + "): " + cause.what()),
          stage_(std::move(stage)), code_(cause.exit_code()) {}
    const std::string& stage() const noexcept { return stage_; }
    ExitCode exit_code() const noexcept override { return code_; }

private:
    std::string stage_;
    ExitCode code_;
};

}  // namespace hetmech
