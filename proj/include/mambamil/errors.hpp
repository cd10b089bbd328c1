#pragma once

#include <stdexcept>
#include <string>

namespace mambamil {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

// A metric was requested on data for which it is not defined
// (single-class AUC input, no comparable pairs for the C-index).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class EmptyBagError : public Error {
 public:
  using Error::Error;
};

class StratificationError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss encountered during training.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch, std::string bag_id)
      : Error(what), epoch_(epoch), bag_id_(std::move(bag_id)) {}
  int epoch() const { return epoch_; }
  const std::string& bag_id() const { return bag_id_; }

 private:
  int epoch_;
  std::string bag_id_;
};

// File and manifest problems. The kind distinguishes the failure for callers
// that need to react differently (the CLI maps all of them to a data error).
class FormatError : public Error {
 public:
  enum class Kind { kIo, kBadMagic, kBadVersion, kTruncated, kTrailingBytes, kNonFinite, kChecksum, kManifest };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace mambamil
