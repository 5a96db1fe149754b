#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace otf {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Input that must be non-empty was empty (corpus, utterance list, ...).
class EmptyInputError : public Error {
 public:
  using Error::Error;
};

/// An id or index outside its valid range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// A value does not fit its bit budget or the index space is exhausted.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// The decoder and the rescorer disagree about stored state.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, const std::string& what)
      : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Malformed text input. line() is 1-based, 0 when not line-oriented.
class FormatError : public Error {
 public:
  FormatError(std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace otf
