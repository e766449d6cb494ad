#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ekd/error.hpp"
#include "ekd/io.hpp"
#include "support.hpp"

using namespace ekd;
using ekd::test::check_error;

namespace {

TeacherFile parse(const std::string& text) {
  std::istringstream in(text);
  return parse_teacher_file(in);
}

std::string rec(const std::string& c, const std::string& t, const std::string& probs) {
  return R"({"context_id":")" + c + R"(","teacher_id":")" + t + R"(","probs":)" + probs + "}\n";
}

}  // namespace

TEST_CASE("well-formed teacher file") {
  std::string text;
  for (const char* c : {"c1", "c0"})
    for (const char* t : {"b", "a", "c"}) text += rec(c, t, "[0.1,0.2,0.3,0.4]");
  const auto f = parse(text);
  CHECK(f.context_ids == std::vector<std::string>{"c0", "c1"});
  CHECK(f.teacher_ids == std::vector<std::string>{"a", "b", "c"});
  CHECK(f.vocab == 4);
  CHECK(f.bank.size() == 2);
  CHECK(f.bank[0].size() == 3);
}

TEST_CASE("teacher file errors") {
  check_error(ErrorCode::InconsistentTeacherSet,
              [] { parse(rec("c0", "a", "[0.5,0.5]") + rec("c0", "b", "[0.5,0.5]") + rec("c1", "a", "[0.5,0.5]")); });
  check_error(ErrorCode::InvalidDistribution, [] { parse(rec("c0", "a", "[0.5,0.6]")); });
  check_error(ErrorCode::InconsistentVocabSize,
              [] { parse(rec("c0", "a", "[0.5,0.5]") + rec("c1", "a", "[0.2,0.3,0.5]")); });
  check_error(ErrorCode::InconsistentTeacherSet,
              [] { parse(rec("c0", "a", "[0.5,0.5]") + rec("c0", "a", "[0.5,0.5]")); });
  try {
    parse(rec("c0", "a", "[0.5,0.5]") + "{not json\n");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  check_error(ErrorCode::ParseError, [] { parse(R"({"context_id":"c","teacher_id":"a","probs":[1,0],"x":1})"); });
}

TEST_CASE("task from teacher file matches ids") {
  const auto f = parse(rec("c0", "a", "[0.5,0.5]") + rec("c0", "b", "[0.2,0.8]"));
  const auto ens = parse_ensemble(nlohmann::json::parse(R"([{"id":"b","temperature":1,"weight":1},
                                                           {"id":"a","temperature":2,"weight":1}])"),
                                  2, "t");
  const auto task = task_from_teacher_file(f, ens);
  CHECK(task.teacher_bank[0][0][1] == 0.8);
  const auto bad = parse_ensemble(nlohmann::json::parse(R"([{"id":"z","temperature":1,"weight":1},
                                                           {"id":"a","temperature":1,"weight":1}])"),
                                  2, "t");
  check_error(ErrorCode::InconsistentTeacherSet, [&] { task_from_teacher_file(f, bad); });
}

TEST_CASE("config reader rejects unknown keys and bad types") {
  ConfigReader r(nlohmann::json::parse(R"({"a":1,"b":2})"), "cfg");
  CHECK(r.get<int>("a") == 1);
  check_error(ErrorCode::ConfigInvalid, [&] { r.finish(); });
  ConfigReader t(nlohmann::json::parse(R"({"a":"x"})"), "cfg");
  check_error(ErrorCode::ConfigInvalid, [&] { t.get<int>("a"); });
  check_error(ErrorCode::ConfigInvalid,
              [] { parse_operator(nlohmann::json::parse(R"({"family":"PowerMean","alpha":2})"), "op"); });
  check_error(ErrorCode::ConfigInvalid, [] { parse_operator(nlohmann::json::parse(R"({"family":"Median"})"), "op"); });
  const auto op = parse_operator(nlohmann::json::parse(R"({"family":"EntropicGeometric","beta":0.5})"), "op");
  CHECK(op.beta == 0.5);
  CHECK(parse_operator(operator_to_json(op), "op").descriptor() == op.descriptor());
}

TEST_CASE("jsonl round trip preserves doubles exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "ekd_io_test";
  std::vector<nlohmann::json> rows = {{{"x", 0.1}, {"y", 1.0 / 3.0}}, {{"x", 1e-300}, {"y", 2.718281828459045}}};
  write_jsonl(dir / "r.jsonl", rows);
  CHECK(read_jsonl(dir / "r.jsonl") == rows);
  std::filesystem::remove_all(dir);
}

TEST_CASE("instance hash is stable") {
  const auto j = nlohmann::json::parse(R"({"a":[1,2],"b":"x"})");
  CHECK(instance_hash(j) == instance_hash(nlohmann::json::parse(R"({"b":"x","a":[1,2]})")));
  CHECK(instance_hash(j).size() == 16);
  CHECK(instance_hash(j) != instance_hash(nlohmann::json::parse(R"({"a":[1,3],"b":"x"})")));
}
