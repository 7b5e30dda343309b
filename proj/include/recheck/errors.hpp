/*
 * Copyright 2026 The recheck Authors.
 *
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

namespace recheck {

// Base of every error raised by the harness. The CLI maps subclasses to
// stable exit codes (see tools/recheck_main.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define RECHECK_DEFINE_ERROR(Name)          \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

// datamodel
RECHECK_DEFINE_ERROR(InvalidParameter);
RECHECK_DEFINE_ERROR(DuplicateId);
RECHECK_DEFINE_ERROR(IoError);

class MalformedRow : public Error {
 public:
  MalformedRow(std::string file, std::size_t line, const std::string& reason)
      : Error(file + ":" + std::to_string(line) + ": " + reason),
        file_(std::move(file)),
        line_(line) {}
  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class DanglingReference : public Error {
 public:
  DanglingReference(std::string id, const std::string& what)
      : Error(what + " '" + id + "' is not present in the catalog"),
        id_(std::move(id)) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

// folds
RECHECK_DEFINE_ERROR(TooFewEvents);
RECHECK_DEFINE_ERROR(InvalidK);
RECHECK_DEFINE_ERROR(InconsistentSplit);

// metrics / slices
RECHECK_DEFINE_ERROR(UserMismatch);
RECHECK_DEFINE_ERROR(InvalidCatalogSize);
RECHECK_DEFINE_ERROR(EmptyTraining);
RECHECK_DEFINE_ERROR(UnknownSliceKind);

// behavioral
RECHECK_DEFINE_ERROR(EmptyHistory);
RECHECK_DEFINE_ERROR(UnknownItem);
RECHECK_DEFINE_ERROR(NoReplacementItem);

// model protocol
RECHECK_DEFINE_ERROR(BudgetExceeded);
RECHECK_DEFINE_ERROR(ModelQueryFailure);
RECHECK_DEFINE_ERROR(ExternalModelFailure);
RECHECK_DEFINE_ERROR(MalformedPredictions);
RECHECK_DEFINE_ERROR(Timeout);

// scoring
RECHECK_DEFINE_ERROR(MissingTestValue);
RECHECK_DEFINE_ERROR(EmptyInput);
RECHECK_DEFINE_ERROR(IncompatibleReports);

class ReportParseError : public Error {
 public:
  ReportParseError(const std::string& what, std::size_t byte_offset)
      : Error(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

#undef RECHECK_DEFINE_ERROR

}  // namespace recheck
