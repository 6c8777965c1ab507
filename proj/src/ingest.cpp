#include "ktbench/ingest.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

namespace ktbench {

namespace {

constexpr char kUnitSeparator = '\x1f';
constexpr char kEscape = '\\';

std::vector<std::string> split_kcs(const std::string& cell) {
  std::vector<std::string> out;
  if (cell.empty()) return out;
  std::size_t start = 0;
  while (true) {
    auto end = cell.find(kKcDelimiter, start);
    out.push_back(cell.substr(start, end == std::string::npos ? std::string::npos : end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

std::string quote_if_needed(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::vector<std::string> split_csv_record(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

Dataset parse_canonical(std::istream& in, std::vector<std::string>* warnings) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line()) throw ParseError(1, "missing header");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (line != kCanonicalHeader)
    throw ParseError(lineno, "header must be '" + std::string(kCanonicalHeader) + "'");

  DatasetBuilder builder;
  while (next_line()) {
    if (line.empty()) continue;
    auto fields = split_csv_record(line);
    if (fields.size() != 5)
      throw ParseError(lineno, "expected 5 fields, found " + std::to_string(fields.size()));

    std::optional<int> response;
    if (fields[3] == "0" || fields[3] == "1") {
      response = fields[3][0] - '0';
    } else if (!fields[3].empty()) {
      throw ParseError(lineno, "response must be 0 or 1, got '" + fields[3] + "'");
    }

    std::optional<std::int64_t> timestamp;
    if (!fields[4].empty()) {
      std::int64_t value = 0;
      const auto* first = fields[4].data();
      const auto* last = first + fields[4].size();
      auto [ptr, ec] = std::from_chars(first, last, value);
      if (ec != std::errc() || ptr != last)
        throw ParseError(lineno, "timestamp is not an integer: '" + fields[4] + "'");
      timestamp = value;
    }

    builder.add(fields[0], fields[1], split_kcs(fields[2]), response, timestamp, lineno);
  }

  Dataset ds = builder.build();
  if (warnings) warnings->insert(warnings->end(), builder.warnings().begin(), builder.warnings().end());
  return ds;
}

Dataset parse_canonical(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return parse_canonical(in, warnings);
}

void write_canonical(const Dataset& dataset, std::ostream& out) {
  out << kCanonicalHeader << '\n';
  for (const auto& seq : dataset.sequences) {
    for (const auto& it : seq.interactions) {
      std::string kcs;
      for (std::size_t i = 0; i < it.kcs.size(); ++i) {
        if (i) kcs += kKcDelimiter;
        kcs += dataset.kc_vocab.at(it.kcs[i]);
      }
      out << quote_if_needed(seq.student_id) << ','
          << (it.question >= 0 ? quote_if_needed(dataset.question_vocab.at(it.question)) : "")
          << ',' << quote_if_needed(kcs) << ','
          << (it.response ? std::to_string(*it.response) : "") << ','
          << (it.timestamp ? std::to_string(*it.timestamp) : "") << '\n';
    }
  }
}

void write_canonical(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_canonical(dataset, out);
}

std::string compose_question_id(std::string_view problem_name, std::string_view step_name) {
  if (problem_name.empty() || step_name.empty())
    throw Error("compose_question_id: problem and step names must be non-empty");
  std::string out;
  auto append_escaped = [&](std::string_view part) {
    for (char c : part) {
      if (c == kUnitSeparator || c == kEscape) out += kEscape;
      out += c;
    }
  };
  append_escaped(problem_name);
  out += kUnitSeparator;
  append_escaped(step_name);
  return out;
}

std::pair<std::string, std::string> split_question_id(std::string_view question_id) {
  std::string parts[2];
  int part = 0;
  for (std::size_t i = 0; i < question_id.size(); ++i) {
    const char c = question_id[i];
    if (c == kEscape && i + 1 < question_id.size()) {
      parts[part] += question_id[++i];
    } else if (c == kUnitSeparator && part == 0) {
      part = 1;
    } else {
      parts[part] += c;
    }
  }
  if (part != 1) throw Error("not a composed question id");
  return {parts[0], parts[1]};
}

}  // namespace ktbench
