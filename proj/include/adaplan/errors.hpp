#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace adaplan {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration value, unknown key, unknown tier or mode.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class InvalidArchitecture : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix dimensions that do not match the model.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A non-positive variance or other out-of-domain argument.
class DomainError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class InvalidAction : public Error {
 public:
  using Error::Error;
};

class FileError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient. `index()` is the offending batch sample, or
/// npos when the value is not tied to one sample.
class NumericError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit NumericError(const std::string& what, std::size_t index = npos)
      : Error(what), index_(index) {}

  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

/// Malformed dataset or checkpoint file.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Reverse diffusion produced a non-finite value at denoising step `step()`.
class SamplingDiverged : public Error {
 public:
  explicit SamplingDiverged(int step)
      : Error("diffusion sampling diverged at step k=" + std::to_string(step)), step_(step) {}

  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace adaplan
