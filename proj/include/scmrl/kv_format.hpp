#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scmrl/error.hpp"

namespace scmrl {

// Flat sectioned key-value documents, the project's text wire format:
//
//   # comment
//   [section]
//   key = value
//   other.0 = 1 2 3
//
// Values are raw strings up to end of line; list-valued keys hold
// whitespace-separated tokens. Writing is canonical (one space around '=',
// sections in insertion order, trailing newline) so emitted files are
// byte-stable.

struct KvEntry {
  std::string key;
  std::string value;
};

struct KvSection {
  std::string name;
  std::vector<KvEntry> entries;

  const std::string* find(const std::string& key) const;
  // Missing key raises ConfigError naming section and key.
  const std::string& require(const std::string& key) const;
};

struct KvDocument {
  std::vector<KvSection> sections;

  const KvSection* find(const std::string& name) const;
  const KvSection& require(const std::string& name) const;

  KvSection& add(const std::string& name);
  void set(const std::string& section, const std::string& key, const std::string& value);
};

KvDocument parse_kv(const std::string& text);
std::string write_kv(const KvDocument& document);

KvDocument read_kv_file(const std::string& path);   // IoError on failure
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Value conversions; all raise ConfigError with the offending text.
int kv_int(const std::string& value);
double kv_double(const std::string& value);
bool kv_bool(const std::string& value);  // 0/1/true/false
std::vector<int> kv_int_list(const std::string& value);
std::vector<double> kv_double_list(const std::string& value);
std::vector<std::string> kv_tokens(const std::string& value);

}  // namespace scmrl
