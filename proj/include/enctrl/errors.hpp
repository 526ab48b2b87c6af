/*
 * Copyright 2026 The enctrl Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
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

namespace enctrl {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidParams : public Error {
 public:
  using Error::Error;
};

class PlaintextOutOfRange : public Error {
 public:
  using Error::Error;
};

class NonIntegerF : public Error {
 public:
  explicit NonIntegerF(const std::string& detail)
      : Error("controller state matrix F must be integer (" + detail +
              "): scaling a non-integer F multiplies the encrypted state by "
              "1/S_F on every update, so its message grows without bound and "
              "eventually leaves the plaintext space") {}
};

class InvalidScale : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace enctrl
