#include "ekd/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ekd/error.hpp"

namespace ekd {

using nlohmann::json;

TeacherFile parse_teacher_file(std::istream& in) {
  std::map<std::string, std::map<std::string, std::vector<double>>> grouped;
  std::string line;
  std::size_t line_no = 0;
  std::size_t vocab = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "line " + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::ParseError, where + ": " + e.what());
    }
    if (!rec.is_object() || rec.size() != 3 || !rec.contains("context_id") || !rec.contains("teacher_id") ||
        !rec.contains("probs"))
      throw Error(ErrorCode::ParseError, where + ": expected exactly context_id, teacher_id, probs");
    std::string ctx, teacher;
    std::vector<double> probs;
    try {
      ctx = rec["context_id"].get<std::string>();
      teacher = rec["teacher_id"].get<std::string>();
      probs = rec["probs"].get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, where + ": " + e.what());
    }
    try {
      (void)Distribution::validated(probs);
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidDistribution, where + ": " + e.detail());
    }
    if (vocab == 0) vocab = probs.size();
    if (probs.size() != vocab)
      throw Error(ErrorCode::InconsistentVocabSize,
                  where + ": vocab " + std::to_string(probs.size()) + " != " + std::to_string(vocab));
    if (!grouped[ctx].emplace(teacher, std::move(probs)).second)
      throw Error(ErrorCode::InconsistentTeacherSet, where + ": duplicate teacher '" + teacher + "'");
  }
  if (grouped.empty()) throw Error(ErrorCode::ParseError, "teacher file holds no records");

  TeacherFile out;
  out.vocab = vocab;
  for (const auto& [teacher, _] : grouped.begin()->second) out.teacher_ids.push_back(teacher);
  for (auto& [ctx, teachers] : grouped) {
    std::vector<std::string> ids;
    for (const auto& [teacher, _] : teachers) ids.push_back(teacher);
    if (ids != out.teacher_ids)
      throw Error(ErrorCode::InconsistentTeacherSet, "context '" + ctx + "' has a different teacher set");
    out.context_ids.push_back(ctx);
    std::vector<Distribution> row;
    for (auto& [teacher, probs] : teachers) row.push_back(Distribution::validated(std::move(probs)));
    out.bank.push_back(std::move(row));
  }
  return out;
}

TeacherFile load_teacher_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return parse_teacher_file(in);
}

SyntheticTask task_from_teacher_file(const TeacherFile& file, const TeacherEnsemble& ensemble) {
  if (ensemble.vocab_size() != file.vocab)
    throw Error(ErrorCode::InconsistentVocabSize, "ensemble vocab differs from teacher file");
  if (ensemble.size() != file.teacher_ids.size())
    throw Error(ErrorCode::InconsistentTeacherSet, "ensemble teacher count differs from teacher file");
  // File rows are ordered by teacher id; reorder to the ensemble's order.
  std::vector<std::size_t> column;
  for (const auto& t : ensemble.teachers()) {
    const auto it = std::find(file.teacher_ids.begin(), file.teacher_ids.end(), t.id);
    if (it == file.teacher_ids.end())
      throw Error(ErrorCode::InconsistentTeacherSet, "teacher '" + t.id + "' missing from teacher file");
    column.push_back(static_cast<std::size_t>(it - file.teacher_ids.begin()));
  }
  SyntheticTask task{ensemble, {}, {}};
  for (const auto& row : file.bank) {
    std::vector<Distribution> ordered;
    for (auto c : column) ordered.push_back(row[c]);
    task.teacher_bank.push_back(std::move(ordered));
  }
  return task;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
  std::ostringstream os;
  for (const auto& r : rows) os << r.dump() << '\n';
  write_text(path, os.str());
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::ParseError, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

std::string instance_hash(const json& descriptor) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : descriptor.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ConfigReader::ConfigReader(const json& object, std::string where) : object_(object), where_(std::move(where)) {
  if (!object_.is_object()) throw Error(ErrorCode::ConfigInvalid, where_ + ": expected an object");
}

const json& ConfigReader::raw(const std::string& key) {
  if (!object_.contains(key)) fail("missing required key '" + key + "'");
  seen_.insert(key);
  return object_.at(key);
}

ConfigReader ConfigReader::child(const std::string& key) { return ConfigReader(raw(key), where_ + "." + key); }

void ConfigReader::finish() const {
  for (const auto& [key, _] : object_.items())
    if (!seen_.count(key)) fail("unknown key '" + key + "'");
}

void ConfigReader::fail(const std::string& message) const {
  throw Error(ErrorCode::ConfigInvalid, where_ + ": " + message);
}

AggregationOperator parse_operator(const json& spec, const std::string& where) {
  ConfigReader r(spec, where);
  const auto family = r.get<std::string>("family");
  AggregationOperator op;
  if (family == "LinearMixture") {
    op = AggregationOperator::linear();
  } else if (family == "PowerMean") {
    op.family = OperatorFamily::PowerMean;
    op.alpha = r.get<double>("alpha");
  } else if (family == "EntropicGeometric") {
    op.family = OperatorFamily::EntropicGeometric;
    op.beta = r.get<double>("beta");
  } else {
    r.fail("unknown operator family '" + family + "'");
  }
  op.epsilon_floor = r.get_or<double>("epsilon_floor", 0.0);
  r.finish();
  try {
    op.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigInvalid, where + ": " + e.what());
  }
  return op;
}

json operator_to_json(const AggregationOperator& op) {
  json j{{"family", to_string(op.family)}};
  if (op.family == OperatorFamily::PowerMean) j["alpha"] = op.alpha;
  if (op.family == OperatorFamily::EntropicGeometric) j["beta"] = op.beta;
  if (op.epsilon_floor > 0.0) j["epsilon_floor"] = op.epsilon_floor;
  return j;
}

TeacherEnsemble parse_ensemble(const json& spec, std::size_t vocab, const std::string& where) {
  if (!spec.is_array() || spec.empty())
    throw Error(ErrorCode::ConfigInvalid, where + ": expected a non-empty array of teachers");
  std::vector<TeacherSpec> teachers;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    ConfigReader r(spec[k], where + "[" + std::to_string(k) + "]");
    TeacherSpec t;
    t.id = r.get<std::string>("id");
    t.temperature = r.get<double>("temperature");
    t.weight = r.get<double>("weight");
    r.get_or<std::string>("role", "");
    r.finish();
    teachers.push_back(std::move(t));
  }
  try {
    return TeacherEnsemble(std::move(teachers), vocab);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigInvalid, where + ": " + e.what());
  }
}

}  // namespace ekd
