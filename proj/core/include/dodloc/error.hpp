// Copyright 2026 The dodloc Authors
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

namespace dodloc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data: bad files, shape mismatches, invalid configs.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or divergence during numerical work.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The scene sampler could not satisfy its placement constraints.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// A target projects partly behind the camera plane.
class DegenerateProjection : public Error {
 public:
  using Error::Error;
};

}  // namespace dodloc
