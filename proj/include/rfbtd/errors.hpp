#pragma once

#include <stdexcept>
#include <string>

namespace rfbtd {

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Zero-area or collapsed-vertex input to rectangle fitting.
class DegenerateGeometryError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

// Pixel not strictly inside the box it is being encoded against.
class OutOfBoxError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

// Non-positive distance handed to the decoder.
class InvalidGeometryError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line, const std::string& source = {})
      : std::runtime_error((source.empty() ? "" : source + ":") + "line " + std::to_string(line) + ": " + what),
        line_(line),
        detail_(what) {}
  std::size_t line() const noexcept { return line_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::size_t line_;
  std::string detail_;
};

class LabelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite value found in a loss input grid.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& grid, std::size_t index)
      : std::runtime_error("non-finite value in " + grid + " at index " + std::to_string(index)),
        grid_(grid),
        index_(index) {}
  const std::string& grid() const noexcept { return grid_; }
  std::size_t index() const noexcept { return index_; }

 private:
  std::string grid_;
  std::size_t index_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rfbtd
