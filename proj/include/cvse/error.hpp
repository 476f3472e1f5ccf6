// Copyright 2026 The cvse Authors.
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

#ifndef CVSE_ERROR_HPP_
#define CVSE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace cvse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid option values, incompatible shapes, bad command lines.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input files and datasets.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or degenerate numeric state during computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace cvse

#endif  // CVSE_ERROR_HPP_
