#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace palp {

/// Base class for all palp runtime failures.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The integrated state left the contact regime (d < 0).
struct LossOfContactError : Error {
  double time;
  explicit LossOfContactError(double t)
      : Error("loss of contact at t = " + std::to_string(t) + " s"), time(t) {}
};

/// Integration or filtering produced a non-finite or singular quantity.
struct NumericalError : Error {
  double time;
  explicit NumericalError(const std::string& what_, double t = 0.0)
      : Error(what_), time(t) {}
};

/// Least-squares regressor matrix is rank deficient.
struct DegenerateFitError : Error {
  std::string regressor;  // which regressor carries no information
  explicit DegenerateFitError(std::string which)
      : Error("degenerate least-squares fit: " + which +
              " regressor carries no information"),
        regressor(std::move(which)) {}
};

/// CSV parsing failure with location information.
struct ParseError : Error {
  std::size_t row;     // 1-based, header row = 1
  std::string column;  // column name, or "" when the row itself is malformed
  ParseError(std::size_t row_, std::string column_, const std::string& reason)
      : Error("row " + std::to_string(row_) +
              (column_.empty() ? std::string{} : ", column '" + column_ + "'") +
              ": " + reason),
        row(row_),
        column(std::move(column_)) {}
};

/// Invalid configuration file, key, or option set.
struct ConfigError : Error {
  using Error::Error;
};

/// Filter failure wrapped with the offending sample index.
struct FilterError : Error {
  std::size_t sample;
  FilterError(std::size_t sample_, const std::string& reason)
      : Error("sample " + std::to_string(sample_) + ": " + reason),
        sample(sample_) {}
};

}  // namespace palp
