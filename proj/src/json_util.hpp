#pragma once

#include <string>

#include <json.hpp>

#include "memore/error.hpp"

namespace memore::detail {

inline const nlohmann::json& field(const nlohmann::json& j, const char* key,
                                   ErrorCode code = ErrorCode::InvalidArgument) {
  if (!j.is_object()) throw Error(code, std::string("expected an object holding '") + key + "'");
  auto it = j.find(key);
  if (it == j.end()) throw Error(code, std::string("missing field '") + key + "'");
  return *it;
}

inline double number(const nlohmann::json& j, const char* key,
                     ErrorCode code = ErrorCode::InvalidArgument) {
  const auto& v = field(j, key, code);
  if (!v.is_number()) throw Error(code, std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

inline std::uint64_t count(const nlohmann::json& j, const char* key,
                           ErrorCode code = ErrorCode::InvalidArgument) {
  const auto& v = field(j, key, code);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw Error(code, std::string("field '") + key + "' must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

inline std::string text(const nlohmann::json& j, const char* key,
                        ErrorCode code = ErrorCode::InvalidArgument) {
  const auto& v = field(j, key, code);
  if (!v.is_string()) throw Error(code, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace memore::detail
