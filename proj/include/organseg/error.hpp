// Copyright 2026 The OrganSeg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace organseg {

// Base for every error raised by the library. Each subclass maps onto one
// failure category the CLI turns into an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, unreadable or unwritable files.
class IoError : public Error {
 public:
  using Error::Error;
};

// Bytes that do not decode as the expected file format.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A rectangle or index outside the image it refers to.
class BoundsError : public Error {
 public:
  using Error::Error;
};

// A caller-supplied value violates an operation's precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Malformed text input. Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

// Well-formed input that violates a semantic rule (duplicates, omissions).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes that do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Training cannot proceed or diverged.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace organseg
