/*
 * Copyright 2026 The maru Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace maru {

// Every library failure derives from Error so callers can map categories
// to exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error { using Error::Error; };
class ParameterError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

// Weight and image file problems.
class FormatError : public Error { using Error::Error; };
class VersionError : public FormatError { using FormatError::FormatError; };
class CorruptionError : public FormatError { using FormatError::FormatError; };

}  // namespace maru
