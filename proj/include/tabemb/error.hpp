#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tabemb {

/// Base class for every error caused by bad input, configuration or data.
/// Anything else escaping the library is an internal failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class MissingColumn : public Error {
 public:
  explicit MissingColumn(std::string column)
      : Error("missing column '" + column + "'"), column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

class NonNumericCell : public Error {
 public:
  NonNumericCell(std::string column, std::size_t row, const std::string& cell)
      : Error("non-numeric cell '" + cell + "' in column '" + column + "' at data row " +
              std::to_string(row)),
        column_(std::move(column)),
        row_(row) {}
  const std::string& column() const noexcept { return column_; }
  std::size_t row() const noexcept { return row_; }

 private:
  std::string column_;
  std::size_t row_;
};

class ZeroGroupMean : public Error {
 public:
  explicit ZeroGroupMean(std::string group)
      : Error("training mean of target is zero for group '" + group + "'"), group_(std::move(group)) {}
  const std::string& group() const noexcept { return group_; }

 private:
  std::string group_;
};

class EmptyColumn : public Error {
 public:
  explicit EmptyColumn(std::string column)
      : Error("column '" + column + "' has no non-missing values to fit bins on"),
        column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

class UnknownEntity : public Error {
 public:
  UnknownEntity(std::string column, std::string value)
      : Error("unknown entity '" + value + "' in column '" + column + "'"),
        column_(std::move(column)),
        value_(std::move(value)) {}
  const std::string& column() const noexcept { return column_; }
  const std::string& value() const noexcept { return value_; }

 private:
  std::string column_;
  std::string value_;
};

class TooLarge : public Error {
 public:
  TooLarge(std::size_t n, std::size_t limit)
      : Error("graph has " + std::to_string(n) + " nodes, above the dense limit of " +
              std::to_string(limit) + "; use coarser bins or raise the limit"),
        n_(n) {}
  std::size_t nodes() const noexcept { return n_; }

 private:
  std::size_t n_;
};

class NoKnownEntities : public Error {
 public:
  NoKnownEntities() : Error("row has no known entities; its embedding is undefined") {}
};

class FormatVersionMismatch : public Error {
 public:
  FormatVersionMismatch(unsigned found, unsigned expected)
      : Error("bundle format version " + std::to_string(found) + ", expected " +
              std::to_string(expected)) {}
};

class ChecksumMismatch : public Error {
 public:
  ChecksumMismatch() : Error("bundle checksum mismatch (file truncated or corrupted)") {}
};

class ZeroDistance : public Error {
 public:
  ZeroDistance() : Error("zero neighbor distance is undefined for the unnormalized predictor") {}
};

class SingleClass : public Error {
 public:
  SingleClass() : Error("AUC needs both classes among the labels") {}
};

class EmptyInput : public Error {
 public:
  EmptyInput() : Error("metric input is empty") {}
};

}  // namespace tabemb
