#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace poseforge {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class PointBehindCamera : public Error {
 public:
  explicit PointBehindCamera(double depth)
      : Error("point behind camera (depth " + std::to_string(depth) + ")"),
        depth_(depth) {}
  double depth() const { return depth_; }

 private:
  double depth_;
};

// Collinear, coplanar, coincident or otherwise rank-deficient input.
class DegenerateConfiguration : public Error {
 public:
  using Error::Error;
};

class EmptyMask : public Error {
 public:
  EmptyMask() : Error("no grid cell center falls inside the object silhouette") {}
};

class NoConsensus : public Error {
 public:
  NoConsensus(std::size_t best, std::size_t required)
      : Error("RANSAC found no consensus: best inlier count " + std::to_string(best) +
              " < required " + std::to_string(required)),
        best_(best) {}
  std::size_t best_inlier_count() const { return best_; }

 private:
  std::size_t best_;
};

class NonFinite : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path), reason_(what) {}
  const std::string& path() const { return path_; }
  const std::string& reason() const { return reason_; }

 private:
  std::string path_;
  std::string reason_;
};

}  // namespace poseforge
