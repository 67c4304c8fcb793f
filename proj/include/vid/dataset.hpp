#pragma once

#include "vid/types.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace vid {

/// Malformed dataset file. Carries the file and 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        file_(file),
        line_(line) {}
  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

/// Well-formed file whose contents violate a log invariant (e.g. time order).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes imu.csv, rotor.csv, cam.csv, truth.csv and meta.json into `dir`.
/// Reals are written with 9 significant digits.
void write_log(const std::filesystem::path& dir, const SensorLog& log);

SensorLog read_log(const std::filesystem::path& dir);

/// Formats a real with 9 significant digits ("nan" for NaN).
std::string format_real(double x);

}  // namespace vid
