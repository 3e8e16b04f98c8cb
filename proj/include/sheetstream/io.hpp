// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sheetstream/model.hpp"
#include "sheetstream/partition.hpp"
#include "sheetstream/value.hpp"
#include "sheetstream/window.hpp"

namespace sheetstream {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataFormat { Csv, Jsonl };

/// ".jsonl" / ".ndjson" select JSON lines; anything else is CSV.
DataFormat format_for_path(std::string_view path);
std::optional<DataFormat> parse_data_format(std::string_view name);

struct TupleRecord {
  std::string stream;
  std::vector<Value> values;  // schema order
  Timestamp ts = 0;
  std::uint64_t seq = 0;      // global arrival index, 0-based
};

class TupleSource {
 public:
  virtual ~TupleSource() = default;
  /// nullopt at end of input; throws IoError on malformed input.
  virtual std::optional<TupleRecord> next() = 0;
};

/// RFC 4180 reader: comma separated, double-quote escaping, LF or CRLF.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}
  /// False at end of input. Throws IoError on an unterminated quote.
  bool read_row(std::vector<std::string>& fields);
  /// 1-based line number where the last returned row started.
  std::size_t line() const { return row_line_; }

 private:
  std::istream& in_;
  std::size_t next_line_ = 1;
  std::size_t row_line_ = 0;
};

std::string csv_escape(std::string_view field);

struct InputSource {
  std::string label;  // file name used in messages
  std::unique_ptr<std::istream> in;
  DataFormat format = DataFormat::Csv;
};

/// Merges one source per declared stream into a single cursor ordered by
/// timestamp, then stream declaration order, then position within the file.
/// Streams without ts_attr use their 0-based row index as timestamp (only
/// valid for single-stream models without windows).
class MergedCursor : public TupleSource {
 public:
  MergedCursor(const SheetModel& model, std::map<std::string, InputSource> sources);
  ~MergedCursor() override;
  std::optional<TupleRecord> next() override;

 private:
  class StreamReader;
  struct Pending {
    std::vector<Value> values;
    Timestamp ts = 0;
  };
  std::vector<std::unique_ptr<StreamReader>> readers_;
  std::vector<std::optional<Pending>> pending_;
  std::vector<std::string> names_;
  std::uint64_t seq_ = 0;
};

/// Opens files by path; format is chosen from the extension unless given.
std::unique_ptr<MergedCursor> open_inputs(const SheetModel& model,
                                          const std::map<std::string, std::string>& paths);

/// In-memory source, mainly for tests and benchmarks.
class VectorSource : public TupleSource {
 public:
  explicit VectorSource(std::vector<TupleRecord> records) : records_(std::move(records)) {}
  std::optional<TupleRecord> next() override;

 private:
  std::vector<TupleRecord> records_;
  std::size_t pos_ = 0;
};

struct OutputRecord {
  std::optional<Key> key;
  std::uint64_t seq = 0;
  std::vector<std::pair<std::string, Value>> exports;
};

/// Text of a value inside an output row (CSV field before quoting).
std::string format_cell(const Value& v);

class OutputSink {
 public:
  virtual ~OutputSink() = default;
  virtual void begin(bool keyed, const std::vector<std::string>& export_names) = 0;
  virtual void emit(const OutputRecord& record) = 0;
  virtual void finish() = 0;
};

/// Header `__key?,__seq,<exports>`; LF line endings.
class CsvSink : public OutputSink {
 public:
  explicit CsvSink(std::ostream& out) : out_(out) {}
  void begin(bool keyed, const std::vector<std::string>& export_names) override;
  void emit(const OutputRecord& record) override;
  void finish() override;

 private:
  std::ostream& out_;
  bool keyed_ = false;
};

/// One object per line: {"__key"?, "__seq", <exports>...}.
class JsonlSink : public OutputSink {
 public:
  explicit JsonlSink(std::ostream& out) : out_(out) {}
  void begin(bool keyed, const std::vector<std::string>& export_names) override;
  void emit(const OutputRecord& record) override;
  void finish() override;

 private:
  std::ostream& out_;
  bool keyed_ = false;
};

std::unique_ptr<OutputSink> make_sink(DataFormat format, std::ostream& out);

struct RunConfig {
  std::size_t max_partitions = kDefaultMaxPartitions;
};

struct RunStats {
  std::uint64_t tuples_in = 0;
  std::uint64_t tuples_dropped_by_select = 0;
  std::uint64_t outputs_emitted = 0;
  std::uint64_t partitions_created = 0;
  std::uint64_t evaluation_passes = 0;

  std::string summary() const;
};

/// Aborted run; the message names the input seq that failed.
class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// admit -> route/apply -> emit when an export changed, one tuple at a time.
RunStats run(std::shared_ptr<const SheetModel> model, TupleSource& cursor, OutputSink& sink,
             const RunConfig& config = {});

/// Output record for one processed tuple; exposed for the serve loop.
OutputRecord make_output(const Operator::Step& step, std::uint64_t seq);

}  // namespace sheetstream
