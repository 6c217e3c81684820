#pragma once
// Error values shared across modules. Expected failures travel as values so
// they can be serialized back to the agent; programming errors throw.

#include "povgen/json.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace povgen {

enum class ErrCode {
    ParseError,
    SchemaViolation,
    PermissionDenied,
    ReferentialIntegrity,
    IllegalTransition,
    IncompletePhase,
    PhaseGating,
    NotAvailable,
    NotSupported,
    UnknownFunction,
    UnknownJob,
    UnknownTopic,
    UnknownMethod,
    InvalidParams,
    EmptySpace,
    UnresolvedSeed,
    EmptySeed,
    EmptyCorpus,
    AllExtractionsFailed,
    TargetUnmapped,
    DanglingReference,
    NoCriticalHit,
    StateError,
    SessionDead,
    IoError,
    SpawnError,
    InvalidConfig,
    Aborted,
};

const char* to_string(ErrCode code);

struct Error {
    ErrCode code;
    std::string message;
    povgen::Json data = povgen::Json::object();

    povgen::Json to_json() const {
        return {{"error", to_string(code)}, {"message", message}, {"data", data}};
    }
};

inline Error make_error(ErrCode code, std::string message,
                        povgen::Json data = povgen::Json::object()) {
    return Error{code, std::move(message), std::move(data)};
}

// Minimal expected-like carrier (std::expected is C++23).
template <typename T>
class Result {
  public:
    Result(T value) : v_(std::move(value)) {}
    Result(Error err) : v_(std::move(err)) {}

    bool ok() const { return std::holds_alternative<T>(v_); }
    explicit operator bool() const { return ok(); }

    T& value() {
        if (!ok()) throw std::logic_error("Result::value on error: " + error().message);
        return std::get<T>(v_);
    }
    const T& value() const {
        if (!ok()) throw std::logic_error("Result::value on error: " + error().message);
        return std::get<T>(v_);
    }
    const Error& error() const { return std::get<Error>(v_); }

    T* operator->() { return &value(); }
    const T* operator->() const { return &value(); }
    T& operator*() { return value(); }
    const T& operator*() const { return value(); }

  private:
    std::variant<T, Error> v_;
};

template <>
class Result<void> {
  public:
    Result() = default;
    Result(Error err) : err_(std::move(err)) {}

    bool ok() const { return !err_.has_value(); }
    explicit operator bool() const { return ok(); }
    const Error& error() const { return *err_; }

  private:
    std::optional<Error> err_;
};

}  // namespace povgen
