#pragma once

#include <stdexcept>
#include <string>

namespace lgpr {

// Error taxonomy shared by the whole library.  `kind()` maps onto the CLI
// exit-code contract: usage errors exit 1, data errors 2, numerical
// failures 3.
enum class ErrorKind { Usage, Data, Numeric };

struct Error : std::runtime_error {
  Error(ErrorKind k, const std::string& what) : std::runtime_error(what), kind_(k) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& w) : Error(ErrorKind::Usage, w) {}
};

struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::Data, w) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

// ---- data -----------------------------------------------------------------

struct ParseError : DataError {
  ParseError(const std::string& w, long line)
      : DataError(w + " (line " + std::to_string(line) + ")"), line(line) {}
  long line;
};

struct EmptyFileError : DataError {
  explicit EmptyFileError(const std::string& path) : DataError("empty input: " + path) {}
};

struct VersionMismatchError : DataError {
  VersionMismatchError(unsigned got, unsigned want)
      : DataError("fit state schema version " + std::to_string(got) + ", expected " +
                  std::to_string(want)) {}
};

struct OutOfDomainError : DataError {
  explicit OutOfDomainError(const std::string& w) : DataError(w) {}
};

struct RegionTooLargeError : DataError {
  explicit RegionTooLargeError(const std::string& w) : DataError(w) {}
};

struct DuplicateAbscissaError : DataError {
  explicit DuplicateAbscissaError(const std::string& w) : DataError(w) {}
};

struct MismatchedLadderError : DataError {
  explicit MismatchedLadderError(const std::string& w) : DataError(w) {}
};

struct EmptyOverlapError : DataError {
  explicit EmptyOverlapError(const std::string& w) : DataError(w) {}
};

struct NonDividingFactorError : DataError {
  explicit NonDividingFactorError(const std::string& w) : DataError(w) {}
};

struct EmptyBandError : DataError {
  explicit EmptyBandError(const std::string& w) : DataError(w) {}
};

struct InsufficientYearsError : DataError {
  explicit InsufficientYearsError(const std::string& w) : DataError(w) {}
};

// ---- numerics -------------------------------------------------------------

struct RankDeficientError : NumericError {
  explicit RankDeficientError(const std::string& w) : NumericError(w) {}
};

struct SingularConditioningError : NumericError {
  explicit SingularConditioningError(const std::string& w) : NumericError(w) {}
};

struct IllConditionedError : NumericError {
  explicit IllConditionedError(const std::string& w) : NumericError(w) {}
};

struct NotPositiveDefiniteError : NumericError {
  explicit NotPositiveDefiniteError(const std::string& w) : NumericError(w) {}
};

struct DegenerateError : NumericError {
  explicit DegenerateError(const std::string& w) : NumericError(w) {}
};

}  // namespace lgpr
