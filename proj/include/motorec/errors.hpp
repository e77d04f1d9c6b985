// Error taxonomy shared by all modules. Exit-code mapping lives in the CLI.
#pragma once

#include <stdexcept>
#include <string>

namespace motorec {

struct error : std::runtime_error {
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or size disagreement between operands.
struct dimension_error : error {
  using error::error;
};

// API misuse: violated precondition that is not data-dependent.
struct contract_error : error {
  using error::error;
};

// Bad hyperparameter, flag, or config-file content.
struct config_error : error {
  using error::error;
};

// Malformed, misaligned, or non-finite input data.
struct data_error : error {
  using error::error;
};

struct parse_error : data_error {
  using data_error::data_error;
};

struct alignment_error : data_error {
  using data_error::data_error;
};

// Corrupted or truncated serialized file.
struct integrity_error : data_error {
  using data_error::data_error;
};

// Serialized file written by an incompatible format version.
struct version_error : data_error {
  using data_error::data_error;
};

// Non-finite loss/gradient or other optimization failure.
struct training_error : error {
  using error::error;
};

}  // namespace motorec
