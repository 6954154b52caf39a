#pragma once

#include <stdexcept>
#include <string>

namespace drn {

// Bad user-supplied data or configuration (non-positive response, empty
// split, malformed recipe, ...).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Non-conformable shapes between layers, batches, or model/feature arity.
class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

// Singular or rank-deficient linear system.
class RankError : public std::runtime_error {
 public:
  explicit RankError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss or gradient during optimisation; carries the dataset row
// index of the first instance of the offending batch.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, long batch_first_row = -1)
      : std::runtime_error(what), batch_first_row_(batch_first_row) {}
  long batch_first_row() const { return batch_first_row_; }

 private:
  long batch_first_row_;
};

// Domain errors for distribution queries (quantile level outside (0,1), ...).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// A command needs an artifact a prior command should have produced.
class DependencyError : public std::runtime_error {
 public:
  explicit DependencyError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace drn
