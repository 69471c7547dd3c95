// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace codedst {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A Reference value points at a slot that has no value in the state it is
/// resolved against.
class UnresolvableReference : public Error {
 public:
  using Error::Error;
};

class SchemaParse : public Error {
 public:
  using Error::Error;
};

/// Malformed corpus, ontology, database or embedding input.
class DataParse : public Error {
 public:
  using Error::Error;
};

class AmbiguousLink : public Error {
 public:
  using Error::Error;
};

/// The gateway exhausted its retry budget, or a replay-only run missed the cache.
class GatewayUnavailable : public Error {
 public:
  using Error::Error;
};

class MalformedResponse : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class PreconditionViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace codedst
