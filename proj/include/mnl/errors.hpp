#pragma once

#include <stdexcept>
#include <string>

namespace mnl {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyDataset : Error {
  EmptyDataset() : Error("dataset is empty") {}
  explicit EmptyDataset(const std::string& what) : Error(what) {}
};

struct InvalidTolerance : Error {
  explicit InvalidTolerance(const std::string& what) : Error(what) {}
};

struct DatasetTooSmall : Error {
  explicit DatasetTooSmall(const std::string& what) : Error(what) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(what) {}
};

struct EmptyBatch : Error {
  EmptyBatch() : Error("batch is empty") {}
};

struct DivergenceError : Error {
  explicit DivergenceError(const std::string& what) : Error(what) {}
};

struct CapacityExhausted : Error {
  explicit CapacityExhausted(const std::string& what) : Error(what) {}
};

struct EmptyNeighborhood : Error {
  explicit EmptyNeighborhood(const std::string& what) : Error(what) {}
};

struct InvalidScan : Error {
  explicit InvalidScan(const std::string& what) : Error(what) {}
};

struct InvalidRange : Error {
  explicit InvalidRange(const std::string& what) : Error(what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace mnl
