#include "scmrl/json_out.hpp"

#include <cstdio>

namespace scmrl {

std::string g17(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

namespace {

void append_escaped(const std::string& text, std::string& out) {
  out += '"';
  for (char c : text) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buffer[8];
          std::snprintf(buffer, sizeof buffer, "\\u%04x", c);
          out += buffer;
        } else {
          out += c;
        }
    }
  }
  out += '"';
}

void dump_value(const nlohmann::ordered_json& value, int depth, std::string& out) {
  using value_t = nlohmann::ordered_json::value_t;
  const std::string inner(static_cast<std::size_t>(depth + 1) * 2, ' ');
  const std::string outer(static_cast<std::size_t>(depth) * 2, ' ');
  switch (value.type()) {
    case value_t::null:
      out += "null";
      break;
    case value_t::boolean:
      out += value.get<bool>() ? "true" : "false";
      break;
    case value_t::number_integer:
      out += std::to_string(value.get<std::int64_t>());
      break;
    case value_t::number_unsigned:
      out += std::to_string(value.get<std::uint64_t>());
      break;
    case value_t::number_float:
      out += g17(value.get<double>());
      break;
    case value_t::string:
      append_escaped(value.get<std::string>(), out);
      break;
    case value_t::array: {
      if (value.empty()) {
        out += "[]";
        break;
      }
      out += "[\n";
      for (std::size_t i = 0; i < value.size(); ++i) {
        out += inner;
        dump_value(value[i], depth + 1, out);
        if (i + 1 < value.size()) out += ',';
        out += '\n';
      }
      out += outer;
      out += ']';
      break;
    }
    case value_t::object: {
      if (value.empty()) {
        out += "{}";
        break;
      }
      out += "{\n";
      std::size_t i = 0;
      for (auto it = value.begin(); it != value.end(); ++it, ++i) {
        out += inner;
        append_escaped(it.key(), out);
        out += ": ";
        dump_value(it.value(), depth + 1, out);
        if (i + 1 < value.size()) out += ',';
        out += '\n';
      }
      out += outer;
      out += '}';
      break;
    }
    default:
      out += "null";
      break;
  }
}

}  // namespace

std::string dump_json17(const nlohmann::ordered_json& value) {
  std::string out;
  dump_value(value, 0, out);
  out += '\n';
  return out;
}

}  // namespace scmrl
