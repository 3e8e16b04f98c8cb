// SPDX-License-Identifier: Apache-2.0

#include "sheetstream/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace sheetstream {

using json = nlohmann::json;

namespace {

std::string json_string(std::string_view s) {
  return json(std::string(s)).dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string json_value(const Value& v) {
  if (v.is_number()) return format_number(v.as_number());
  if (v.is_text()) return json_string(v.as_text());
  if (v.is_bool()) return v.as_bool() ? "true" : "false";
  if (v.is_blank()) return "null";
  return json_string(format_cell(v));
}

std::string json_key(const Key& k) {
  if (const auto* s = std::get_if<std::string>(&k)) return json_string(*s);
  return format_number(std::get<double>(k));
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<Timestamp> parse_timestamp(std::string_view s) {
  Timestamp v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0) return std::nullopt;
  return v;
}

// Timestamps travel as Number values; keep them exactly representable.
constexpr Timestamp kMaxTimestamp = Timestamp{1} << 53;

}  // namespace

DataFormat format_for_path(std::string_view path) {
  if (path.ends_with(".jsonl") || path.ends_with(".ndjson")) return DataFormat::Jsonl;
  return DataFormat::Csv;
}

std::optional<DataFormat> parse_data_format(std::string_view name) {
  if (name == "csv") return DataFormat::Csv;
  if (name == "jsonl") return DataFormat::Jsonl;
  return std::nullopt;
}

bool CsvReader::read_row(std::vector<std::string>& fields) {
  using traits = std::istream::traits_type;
  std::streambuf* buf = in_.rdbuf();
  fields.clear();
  for (;;) {
    int c = buf->sgetc();
    if (c == traits::eof()) return false;
    if (c == '\n') {  // skip empty lines
      buf->sbumpc();
      ++next_line_;
      continue;
    }
    if (c == '\r') {
      buf->sbumpc();
      continue;
    }
    break;
  }
  row_line_ = next_line_;
  std::string field;
  bool quoted = false;
  bool after_quote = false;
  for (;;) {
    int c = buf->sbumpc();
    if (quoted) {
      if (c == traits::eof()) throw IoError("line " + std::to_string(row_line_) + ": unterminated quoted field");
      if (c == '"') {
        if (buf->sgetc() == '"') {
          buf->sbumpc();
          field.push_back('"');
        } else {
          quoted = false;
          after_quote = true;
        }
      } else {
        if (c == '\n') ++next_line_;
        field.push_back(static_cast<char>(c));
      }
      continue;
    }
    if (c == traits::eof() || c == '\n' || c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      after_quote = false;
      if (c == ',') continue;
      if (c == '\n') ++next_line_;
      return true;
    }
    if (c == '\r' && (buf->sgetc() == '\n' || buf->sgetc() == traits::eof())) continue;
    if (after_quote)
      throw IoError("line " + std::to_string(next_line_) + ": unexpected character after closing quote");
    if (c == '"' && field.empty()) {
      quoted = true;
      continue;
    }
    field.push_back(static_cast<char>(c));
  }
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

class MergedCursor::StreamReader {
 public:
  StreamReader(const StreamDecl& decl, InputSource source)
      : decl_(decl), label_(std::move(source.label)), in_(std::move(source.in)), format_(source.format), csv_(*in_) {
    if (!*in_) throw IoError(label_ + ": cannot read input");
    if (decl_.ts_attr) ts_index_ = decl_.attr_index(*decl_.ts_attr);
    if (format_ == DataFormat::Csv) {
      std::vector<std::string> header;
      if (!csv_.read_row(header)) throw IoError(label_ + ": missing header row");
      std::vector<std::string> expected;
      for (const auto& a : decl_.attrs) expected.push_back(a.name);
      if (header != expected) {
        std::string want, got;
        for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
        for (const auto& h : header) got += (got.empty() ? "" : ",") + h;
        throw IoError(label_ + ": header '" + got + "' does not match schema of stream '" + decl_.name + "' ('" +
                      want + "')");
      }
    }
  }

  std::optional<Pending> next() {
    Pending p;
    if (format_ == DataFormat::Csv) {
      if (!read_csv(p.values)) return std::nullopt;
    } else {
      if (!read_jsonl(p.values)) return std::nullopt;
    }
    p.ts = ts_index_ >= 0 ? static_cast<Timestamp>(p.values[static_cast<std::size_t>(ts_index_)].as_number())
                          : static_cast<Timestamp>(row_);
    if (last_ts_ && p.ts < *last_ts_)
      throw IoError(where() + ": timestamp " + std::to_string(p.ts) + " decreases (previous " +
                    std::to_string(*last_ts_) + ")");
    last_ts_ = p.ts;
    ++row_;
    return p;
  }

 private:
  std::string where() const { return label_ + " row " + std::to_string(row_ + 1); }

  Value convert_text(const Attr& a, const std::string& field) const {
    switch (a.type) {
      case AttrType::Text: return Value::text(field);
      case AttrType::Number:
        if (auto d = parse_double(field)) return Value::number(*d);
        break;
      case AttrType::Timestamp:
        if (auto t = parse_timestamp(field); t && *t <= kMaxTimestamp) return Value::number(static_cast<double>(*t));
        break;
    }
    throw IoError(where() + " column " + a.name + ": unparseable " + std::string(attr_type_name(a.type)) + " '" +
                  field + "'");
  }

  bool read_csv(std::vector<Value>& out) {
    if (!csv_.read_row(fields_)) return false;
    if (fields_.size() != decl_.attrs.size())
      throw IoError(where() + ": expected " + std::to_string(decl_.attrs.size()) + " fields, got " +
                    std::to_string(fields_.size()));
    out.clear();
    out.reserve(fields_.size());
    for (std::size_t i = 0; i < fields_.size(); ++i) out.push_back(convert_text(decl_.attrs[i], fields_[i]));
    return true;
  }

  bool read_jsonl(std::vector<Value>& out) {
    std::string line;
    for (;;) {
      if (!std::getline(*in_, line)) return false;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) break;
    }
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) throw IoError(where() + ": expected one JSON object per line");
    if (obj.size() != decl_.attrs.size())
      throw IoError(where() + ": expected exactly the keys of stream '" + decl_.name + "'");
    out.clear();
    for (const auto& a : decl_.attrs) {
      auto it = obj.find(a.name);
      if (it == obj.end()) throw IoError(where() + ": missing key '" + a.name + "'");
      const json& v = *it;
      bool ok = false;
      switch (a.type) {
        case AttrType::Text:
          if ((ok = v.is_string())) out.push_back(Value::text(v.get<std::string>()));
          break;
        case AttrType::Number:
          if ((ok = v.is_number() && std::isfinite(v.get<double>()))) out.push_back(Value::number(v.get<double>()));
          break;
        case AttrType::Timestamp:
          if (v.is_number_unsigned() && v.get<std::uint64_t>() <= static_cast<std::uint64_t>(kMaxTimestamp)) {
            ok = true;
            out.push_back(Value::number(static_cast<double>(v.get<std::uint64_t>())));
          }
          break;
      }
      if (!ok) throw IoError(where() + " column " + a.name + ": expected " + std::string(attr_type_name(a.type)));
    }
    return true;
  }

  const StreamDecl& decl_;
  std::string label_;
  std::unique_ptr<std::istream> in_;
  DataFormat format_;
  CsvReader csv_;
  std::vector<std::string> fields_;
  int ts_index_ = -1;
  std::uint64_t row_ = 0;
  std::optional<Timestamp> last_ts_;
};

MergedCursor::MergedCursor(const SheetModel& model, std::map<std::string, InputSource> sources) {
  bool has_window = false;
  for (const auto& c : model.cells)
    if (c.ast.kind == ExprKind::Call && c.ast.fn == Function::Window) has_window = true;
  for (const auto& [name, _] : sources)
    if (model.find_stream(name) == nullptr) throw IoError("input given for undeclared stream '" + name + "'");
  for (const auto& decl : model.streams) {
    if (!decl.ts_attr && (model.streams.size() > 1 || has_window))
      throw IoError("stream '" + decl.name + "' has no ts_attr; only a single-stream model without WINDOW may omit it");
    auto it = sources.find(decl.name);
    if (it == sources.end()) throw IoError("no input given for stream '" + decl.name + "'");
    readers_.push_back(std::make_unique<StreamReader>(decl, std::move(it->second)));
    names_.push_back(decl.name);
  }
  pending_.resize(readers_.size());
  for (std::size_t i = 0; i < readers_.size(); ++i) pending_[i] = readers_[i]->next();
}

MergedCursor::~MergedCursor() = default;

std::optional<TupleRecord> MergedCursor::next() {
  std::size_t best = pending_.size();
  for (std::size_t i = 0; i < pending_.size(); ++i)
    if (pending_[i] && (best == pending_.size() || pending_[i]->ts < pending_[best]->ts)) best = i;
  if (best == pending_.size()) return std::nullopt;
  TupleRecord rec{names_[best], std::move(pending_[best]->values), pending_[best]->ts, seq_++};
  pending_[best] = readers_[best]->next();
  return rec;
}

std::unique_ptr<MergedCursor> open_inputs(const SheetModel& model, const std::map<std::string, std::string>& paths) {
  std::map<std::string, InputSource> sources;
  for (const auto& [name, path] : paths) {
    auto in = std::make_unique<std::ifstream>(path, std::ios::binary);
    if (!*in) throw IoError("cannot open input '" + path + "' for stream '" + name + "'");
    sources.emplace(name, InputSource{path, std::move(in), format_for_path(path)});
  }
  return std::make_unique<MergedCursor>(model, std::move(sources));
}

std::optional<TupleRecord> VectorSource::next() {
  if (pos_ >= records_.size()) return std::nullopt;
  return records_[pos_++];
}

std::string format_cell(const Value& v) {
  if (v.is_number()) return format_number(v.as_number());
  if (v.is_text()) return v.as_text();
  if (v.is_bool()) return v.as_bool() ? "TRUE" : "FALSE";
  if (v.is_blank()) return "";
  if (v.is_error()) return std::string(error_text(v.as_error()));
  return std::string(error_text(ErrorCode::Value));
}

void CsvSink::begin(bool keyed, const std::vector<std::string>& export_names) {
  keyed_ = keyed;
  std::string line = keyed ? "__key,__seq" : "__seq";
  for (const auto& n : export_names) line += "," + csv_escape(n);
  out_ << line << '\n';
}

void CsvSink::emit(const OutputRecord& record) {
  std::string line;
  if (keyed_) line = csv_escape(record.key ? format_literal(*record.key) : "") + ",";
  line += std::to_string(record.seq);
  for (const auto& [_, v] : record.exports) line += "," + csv_escape(format_cell(v));
  line.push_back('\n');
  out_ << line;
  if (!out_) throw IoError("write to output failed");
}

void CsvSink::finish() {
  out_.flush();
  if (!out_) throw IoError("write to output failed");
}

void JsonlSink::begin(bool keyed, const std::vector<std::string>&) { keyed_ = keyed; }

void JsonlSink::emit(const OutputRecord& record) {
  std::string line = "{";
  if (keyed_) line += "\"__key\":" + (record.key ? json_key(*record.key) : std::string("null")) + ",";
  line += "\"__seq\":" + std::to_string(record.seq);
  for (const auto& [name, v] : record.exports) line += "," + json_string(name) + ":" + json_value(v);
  line += "}\n";
  out_ << line;
  if (!out_) throw IoError("write to output failed");
}

void JsonlSink::finish() {
  out_.flush();
  if (!out_) throw IoError("write to output failed");
}

std::unique_ptr<OutputSink> make_sink(DataFormat format, std::ostream& out) {
  if (format == DataFormat::Jsonl) return std::make_unique<JsonlSink>(out);
  return std::make_unique<CsvSink>(out);
}

std::string RunStats::summary() const {
  return "tuples_in=" + std::to_string(tuples_in) + " tuples_dropped_by_select=" +
         std::to_string(tuples_dropped_by_select) + " outputs_emitted=" + std::to_string(outputs_emitted) +
         " partitions_created=" + std::to_string(partitions_created);
}

OutputRecord make_output(const Operator::Step& step, std::uint64_t seq) {
  OutputRecord rec;
  rec.key = step.key;
  rec.seq = seq;
  const auto& exports = step.instance->model().exports;
  auto values = step.instance->export_values();
  for (std::size_t i = 0; i < exports.size(); ++i) rec.exports.emplace_back(exports[i].name, std::move(values[i]));
  return rec;
}

RunStats run(std::shared_ptr<const SheetModel> model, TupleSource& cursor, OutputSink& sink, const RunConfig& config) {
  Operator op(model, config.max_partitions);
  std::vector<std::string> names;
  for (const auto& x : model->exports) names.push_back(x.name);
  sink.begin(op.partitioned(), names);

  RunStats stats;
  for (;;) {
    std::optional<TupleRecord> rec;
    try {
      rec = cursor.next();
    } catch (const IoError& e) {
      throw RunError("input seq " + std::to_string(stats.tuples_in) + ": " + e.what());
    }
    if (!rec) break;
    ++stats.tuples_in;
    Operator::Step step;
    try {
      step = op.push(rec->stream, rec->values, rec->ts);
    } catch (const std::exception& e) {
      throw RunError("input seq " + std::to_string(rec->seq) + " (" + rec->stream + "): " + e.what());
    }
    if (!step.admitted) {
      ++stats.tuples_dropped_by_select;
      continue;
    }
    if (step.changes.exports_changed) {
      sink.emit(make_output(step, rec->seq));
      ++stats.outputs_emitted;
    }
  }
  sink.finish();
  stats.partitions_created = op.partitions_created();
  stats.evaluation_passes = op.evaluation_passes();
  return stats;
}

}  // namespace sheetstream
