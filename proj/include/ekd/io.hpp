#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <istream>
#include <set>
#include <string>
#include <vector>

#include "ekd/distill.hpp"
#include "ekd/operators.hpp"
#include "ekd/prob.hpp"
#include "json.hpp"

namespace ekd {

// Contents of a line-delimited teacher file, one record per
// (context, teacher): {"context_id": ..., "teacher_id": ..., "probs": [...]}.
// Contexts and teachers are sorted lexicographically by id.
struct TeacherFile {
  std::vector<std::string> context_ids;
  std::vector<std::string> teacher_ids;
  std::size_t vocab = 0;
  std::vector<std::vector<Distribution>> bank;  // [context][teacher]
};

TeacherFile parse_teacher_file(std::istream& in);
TeacherFile load_teacher_file(const std::filesystem::path& path);

// Combines a loaded file with per-teacher temperature/weight settings; the
// ensemble's teacher ids must match the file's teacher set.
SyntheticTask task_from_teacher_file(const TeacherFile& file, const TeacherEnsemble& ensemble);

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// 64-bit FNV-1a of the compact serialization, as 16 hex digits.
std::string instance_hash(const nlohmann::json& descriptor);

// Strict view over one JSON object: every key must be consumed, so unknown
// keys surface as ConfigInvalid when finish() runs.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& object, std::string where);

  bool has(const std::string& key) const { return object_.contains(key); }
  const nlohmann::json& raw(const std::string& key);

  template <typename T>
  T get(const std::string& key) {
    try {
      return raw(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(key + ": " + e.what());
    }
  }
  template <typename T>
  T get_or(const std::string& key, T fallback) {
    return has(key) ? get<T>(key) : fallback;
  }
  ConfigReader child(const std::string& key);
  void finish() const;
  [[noreturn]] void fail(const std::string& message) const;

 private:
  nlohmann::json object_;
  std::string where_;
  std::set<std::string> seen_;
};

AggregationOperator parse_operator(const nlohmann::json& spec, const std::string& where);
nlohmann::json operator_to_json(const AggregationOperator& op);
TeacherEnsemble parse_ensemble(const nlohmann::json& spec, std::size_t vocab, const std::string& where);

}  // namespace ekd
