#include "scmrl/kv_format.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace scmrl {

namespace {

std::string trim(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = text.find_last_not_of(" \t\r");
  return text.substr(begin, end - begin + 1);
}

}  // namespace

const std::string* KvSection::find(const std::string& key) const {
  for (const auto& entry : entries)
    if (entry.key == key) return &entry.value;
  return nullptr;
}

const std::string& KvSection::require(const std::string& key) const {
  const std::string* value = find(key);
  if (!value) fail(ErrorCode::ConfigError, "missing key '" + key + "' in section [" + name + "]");
  return *value;
}

const KvSection* KvDocument::find(const std::string& name) const {
  for (const auto& section : sections)
    if (section.name == name) return &section;
  return nullptr;
}

const KvSection& KvDocument::require(const std::string& name) const {
  const KvSection* section = find(name);
  if (!section) fail(ErrorCode::ConfigError, "missing section [" + name + "]");
  return *section;
}

KvSection& KvDocument::add(const std::string& name) {
  for (auto& section : sections)
    if (section.name == name) return section;
  sections.push_back(KvSection{name, {}});
  return sections.back();
}

void KvDocument::set(const std::string& section, const std::string& key, const std::string& value) {
  KvSection& target = add(section);
  for (auto& entry : target.entries) {
    if (entry.key == key) {
      entry.value = value;
      return;
    }
  }
  target.entries.push_back(KvEntry{key, value});
}

KvDocument parse_kv(const std::string& text) {
  KvDocument document;
  KvSection* current = nullptr;
  std::istringstream stream(text);
  std::string raw;
  int line_number = 0;
  while (std::getline(stream, raw)) {
    ++line_number;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        fail(ErrorCode::ConfigError, "line " + std::to_string(line_number) + ": unterminated section header");
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (name.empty())
        fail(ErrorCode::ConfigError, "line " + std::to_string(line_number) + ": empty section name");
      current = &document.add(name);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::ConfigError, "line " + std::to_string(line_number) + ": expected 'key = value'");
    if (!current)
      fail(ErrorCode::ConfigError, "line " + std::to_string(line_number) + ": entry before any section");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      fail(ErrorCode::ConfigError, "line " + std::to_string(line_number) + ": empty key");
    current->entries.push_back(KvEntry{key, trim(line.substr(eq + 1))});
  }
  return document;
}

std::string write_kv(const KvDocument& document) {
  std::string out;
  bool first = true;
  for (const auto& section : document.sections) {
    if (!first) out += '\n';
    first = false;
    out += '[' + section.name + "]\n";
    for (const auto& entry : section.entries) {
      out += entry.key + " =";
      if (!entry.value.empty()) out += ' ' + entry.value;
      out += '\n';
    }
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) fail(ErrorCode::IoError, "read failed on '" + path + "'");
  return buffer.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  if (!out) fail(ErrorCode::IoError, "write failed on '" + path + "'");
}

KvDocument read_kv_file(const std::string& path) { return parse_kv(read_text_file(path)); }

int kv_int(const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const long parsed = std::strtol(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    fail(ErrorCode::ConfigError, "expected integer, got '" + value + "'");
  return static_cast<int>(parsed);
}

double kv_double(const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const double parsed = std::strtod(value.c_str(), &end);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    fail(ErrorCode::ConfigError, "expected number, got '" + value + "'");
  return parsed;
}

bool kv_bool(const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  fail(ErrorCode::ConfigError, "expected boolean (0/1/true/false), got '" + value + "'");
}

std::vector<std::string> kv_tokens(const std::string& value) {
  std::vector<std::string> tokens;
  std::istringstream stream(value);
  std::string token;
  while (stream >> token) tokens.push_back(token);
  return tokens;
}

std::vector<int> kv_int_list(const std::string& value) {
  std::vector<int> out;
  for (const auto& token : kv_tokens(value)) out.push_back(kv_int(token));
  return out;
}

std::vector<double> kv_double_list(const std::string& value) {
  std::vector<double> out;
  for (const auto& token : kv_tokens(value)) out.push_back(kv_double(token));
  return out;
}

}  // namespace scmrl
