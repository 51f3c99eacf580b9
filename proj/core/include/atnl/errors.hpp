#pragma once

#include <stdexcept>
#include <string>

namespace atnl {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Extent mismatch between tensors; the message names both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (bad probability, odd d_model, unknown key, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (non-scalar backward root,
/// zero-indexed schedule step, empty decode source).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Numerically degenerate input: an all-masked softmax row, an all-pad batch.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Unknown symbol or out-of-range token id.
class VocabError : public Error {
 public:
  using Error::Error;
};

/// Malformed or mutually incompatible checkpoint files.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Dataset problems: oversize pair, unreadable file, bad line.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace atnl
