#pragma once

#include <stdexcept>
#include <string>

namespace mqr {

// Shape or argument contract violated by the caller.
using InvalidArgument = std::invalid_argument;
// Argument outside the mathematical domain of a function.
using DomainError = std::domain_error;

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class CalibrationSetTooSmall : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateRegion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateComplement : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyCarrier : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedDimension : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedPlot : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t row, std::size_t column, const std::string& what)
      : std::runtime_error(what), row_(row), column_(column) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mqr
