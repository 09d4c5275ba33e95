#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace resmin {

/// Precondition violated by the caller (bad dimensions, bad tolerance, ...).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The reference time integrator could not reach the requested end time.
class IntegrationFailure : public std::runtime_error {
public:
    IntegrationFailure(const std::string& what, double last_time)
        : std::runtime_error(what + " (last reached t = " + std::to_string(last_time) + ")"),
          last_time_(last_time) {}

    double last_time() const noexcept { return last_time_; }

private:
    double last_time_;
};

/// The forcing function returned a nonfinite value while assembling a Newton
/// matrix. `time_index` and `basis_index` locate the offending evaluation;
/// `iteration` is filled in by the Newton driver (-1 = initial guess).
class EvaluationFailure : public std::runtime_error {
public:
    EvaluationFailure(const std::string& what, std::size_t time_index, std::size_t basis_index,
                      int iteration = -1)
        : std::runtime_error(what), time_index_(time_index), basis_index_(basis_index),
          iteration_(iteration) {}

    std::size_t time_index() const noexcept { return time_index_; }
    std::size_t basis_index() const noexcept { return basis_index_; }
    int iteration() const noexcept { return iteration_; }

private:
    std::size_t time_index_;
    std::size_t basis_index_;
    int iteration_;
};

/// Snapshot store could not be read. The message names the file and field.
class LoadFailure : public std::runtime_error {
public:
    LoadFailure(const std::string& file, const std::string& field, const std::string& why)
        : std::runtime_error(file + ": " + field + ": " + why), file_(file), field_(field) {}

    const std::string& file() const noexcept { return file_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::string file_;
    std::string field_;
};

/// An output file could not be written.
class IoFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace resmin
