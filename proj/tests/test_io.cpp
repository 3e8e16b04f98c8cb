// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "sheetstream/io.hpp"
#include "support.hpp"

using namespace sheetstream;
using namespace sstest;

namespace {

std::vector<std::vector<std::string>> read_all(const std::string& text) {
  std::istringstream in(text);
  CsvReader r(in);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  while (r.read_row(row)) rows.push_back(row);
  return rows;
}

std::unique_ptr<MergedCursor> cursor(const SheetModel& m, std::map<std::string, std::pair<std::string, DataFormat>> in) {
  std::map<std::string, InputSource> sources;
  for (auto& [name, src] : in)
    sources.emplace(name, InputSource{name, std::make_unique<std::istringstream>(src.first), src.second});
  return std::make_unique<MergedCursor>(m, std::move(sources));
}

}  // namespace

TEST_CASE("csv reader") {
  using Rows = std::vector<std::vector<std::string>>;
  CHECK(read_all("a,b\n1,2\n") == Rows{{"a", "b"}, {"1", "2"}});
  CHECK(read_all("a,b\r\n1,2") == Rows{{"a", "b"}, {"1", "2"}});
  CHECK(read_all("\"x,y\",\"he said \"\"hi\"\"\"\n") == Rows{{"x,y", "he said \"hi\""}});
  CHECK(read_all("\"multi\nline\",2\n") == Rows{{"multi\nline", "2"}});
  CHECK(read_all("a,,\n") == Rows{{"a", "", ""}});
  CHECK(read_all("a\n\nb\n") == Rows{{"a"}, {"b"}});
  CHECK_THROWS_AS(read_all("\"open\n"), IoError);
  CHECK(csv_escape("plain") == "plain");
  CHECK(csv_escape("a,b") == "\"a,b\"");
  CHECK(csv_escape("q\"") == "\"q\"\"\"");
}

TEST_CASE("merged cursor orders by time, then declaration, then file order") {
  auto m = model_from(vwap_model_doc(false));
  auto c = cursor(*m, {{"trades", {"sym,price,vol,ts\nA,1,1,5\nA,2,1,5\nA,3,1,9\n", DataFormat::Csv}},
                       {"quotes", {"sym,price,ts\nA,7,1\nA,8,5\n", DataFormat::Csv}}});
  std::vector<std::pair<std::string, double>> seen;
  std::uint64_t seq = 0;
  while (auto rec = c->next()) {
    CHECK(rec->seq == seq++);
    seen.emplace_back(rec->stream, rec->values[1].as_number());
  }
  CHECK(seen == std::vector<std::pair<std::string, double>>{
                    {"quotes", 7}, {"trades", 1}, {"trades", 2}, {"quotes", 8}, {"trades", 3}});
}

TEST_CASE("input validation") {
  auto m = model_from(vwap_model_doc(false));
  // Rows are read ahead, so a bad row may surface while opening or while draining.
  auto drain = [&](const std::string& trades, const std::string& quotes, DataFormat f = DataFormat::Csv) {
    auto c = cursor(*m, {{"trades", {trades, f}}, {"quotes", {quotes, f}}});
    while (c->next()) {
    }
  };
  CHECK_THROWS_AS(cursor(*m, {{"trades", {"sym,price,vol,ts\n", DataFormat::Csv}}}), IoError);
  CHECK_THROWS_AS(drain("sym,price,ts\n", "sym,price,ts\n"), IoError);
  CHECK_THROWS_AS(drain("sym,price,vol,ts\nA,x,1,1\n", "sym,price,ts\n"), IoError);
  CHECK_THROWS_AS(drain("sym,price,vol,ts\nA,1,1,5\nA,1,1,4\n", "sym,price,ts\n"), IoError);
  CHECK_THROWS_AS(drain("sym,price,vol,ts\nA,1,1,1.5\n", "sym,price,ts\n"), IoError);
  CHECK_THROWS_AS(drain("sym,price,vol,ts\nA,1,1\n", "sym,price,ts\n"), IoError);
  CHECK_THROWS_AS(drain("sym,price,vol,ts\nA,1,1,-3\n", "sym,price,ts\n"), IoError);
  CHECK_THROWS_AS(drain("sym,price,vol,ts\nA,inf,1,3\n", "sym,price,ts\n"), IoError);
  CHECK_NOTHROW(drain("sym,price,vol,ts\nA,1,1,5\nA,1,1,5\n", "sym,price,ts\nA,1,2\n"));
  CHECK_THROWS_AS(drain("{\"sym\":\"A\",\"price\":\"10\",\"vol\":100,\"ts\":1}\n", "", DataFormat::Jsonl), IoError);
  CHECK_THROWS_AS(drain("{\"sym\":\"A\",\"price\":10,\"vol\":100}\n", "", DataFormat::Jsonl), IoError);
  CHECK_THROWS_AS(drain("{\"sym\":\"A\",\"price\":10,\"vol\":100,\"ts\":1,\"x\":2}\n", "", DataFormat::Jsonl), IoError);
  CHECK_THROWS_AS(drain("{not json\n", "", DataFormat::Jsonl), IoError);
}

TEST_CASE("json lines input") {
  auto m = model_from(vwap_model_doc(false));
  auto c = cursor(*m, {{"trades", {"{\"sym\":\"A\",\"price\":10,\"vol\":100,\"ts\":1}\n"
                                   "{\"sym\":\"A\",\"price\":20,\"vol\":300,\"ts\":2}\n",
                                   DataFormat::Jsonl}},
                       {"quotes", {"{\"sym\":\"A\",\"price\":15,\"ts\":3}\n", DataFormat::Jsonl}}});
  int n = 0;
  while (auto rec = c->next()) ++n;
  CHECK(n == 3);
}

TEST_CASE("output formats") {
  auto m = model_from(vwap_model_doc(false));
  std::map<std::string, std::string> in = {{"trades", "sym,price,vol,ts\nA,10,100,1\nA,20,300,2\n"},
                                           {"quotes", "sym,price,ts\nA,15,3\nA,16,4\n"}};
  RunStats stats;
  std::string csv = run_to_string(m, in, DataFormat::Csv, &stats);
  CHECK(csv ==
        "__seq,vwap,isBargain\n"
        "0,10,FALSE\n"
        "1,17.5,FALSE\n"
        "2,17.5,TRUE\n");
  CHECK(stats.tuples_in == 4);
  CHECK(stats.outputs_emitted == 3);
  CHECK(stats.evaluation_passes == 4);
  CHECK(stats.summary() == "tuples_in=4 tuples_dropped_by_select=0 outputs_emitted=3 partitions_created=0");

  std::string jsonl = run_to_string(m, in, DataFormat::Jsonl);
  std::istringstream lines(jsonl);
  std::string line;
  std::vector<json> rows;
  while (std::getline(lines, line)) rows.push_back(json::parse(line));
  REQUIRE(rows.size() == 3);
  CHECK(rows[1] == json{{"__seq", 1}, {"vwap", 17.5}, {"isBargain", false}});
  CHECK(rows[0]["vwap"] == 10);
}

TEST_CASE("keyed output and select drops") {
  auto part = model_from(vwap_model_doc(true));
  std::map<std::string, std::string> in = {{"trades", "sym,price,vol,ts\nA,10,1,1\n\"B,x\",20,1,2\n"},
                                           {"quotes", "sym,price,ts\n"}};
  RunStats stats;
  CHECK(run_to_string(part, in, DataFormat::Csv, &stats) ==
        "__key,__seq,vwap,isBargain\n"
        "A,0,10,FALSE\n"
        "\"B,x\",1,20,FALSE\n");
  CHECK(stats.partitions_created == 2);
  CHECK_THROWS_AS(run_to_string(part, in, DataFormat::Csv, nullptr, 1), RunError);

  json doc = vwap_model_doc(false);
  doc["streams"][0]["select"] = {{"attr", "sym"}, {"value", "A"}};
  run_to_string(model_from(doc), in, DataFormat::Csv, &stats);
  CHECK(stats.tuples_dropped_by_select == 1);
  CHECK(stats.outputs_emitted == 1);
}

TEST_CASE("error values and text in output") {
  json doc = vwap_model_doc(false);
  doc["exports"].push_back({{"addr", "A29"}, {"name", "qsym"}});
  std::map<std::string, std::string> in = {{"trades", "sym,price,vol,ts\n"},
                                           {"quotes", "sym,price,ts\n\"x,\"\"y\",1,1\n"}};
  CHECK(run_to_string(model_from(doc), in) ==
        "__seq,vwap,isBargain,qsym\n"
        "0,#DIV/0!,#DIV/0!,\"x,\"\"y\"\n");
  std::string jl = run_to_string(model_from(doc), in, DataFormat::Jsonl);
  CHECK(json::parse(jl) == json{{"__seq", 0}, {"vwap", "#DIV/0!"}, {"isBargain", "#DIV/0!"}, {"qsym", "x,\"y"}});
}

TEST_CASE("single stream without timestamps uses the row index") {
  json doc = {{"streams", {{{"name", "s"}, {"attrs", {{{"name", "a"}, {"type", "number"}}}}}}},
              {"bindings", {{{"stream", "s"}, {"kind", "latest"}, {"region", "A1:A1"}, {"projection", {"a"}}}}},
              {"cells", {{{"addr", "B1"}, {"formula", "=A1*2"}}}},
              {"exports", {{{"addr", "B1"}, {"name", "twice"}}}}};
  CHECK(run_to_string(model_from(doc), {{"s", "a\n1\n1\n3\n"}}) == "__seq,twice\n0,2\n2,6\n");
}
