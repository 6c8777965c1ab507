#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ktbench/core.hpp"

namespace ktbench {

// Canonical interaction log:
//   student_id,question_id,kc_ids,response,timestamp
// kc_ids are '|'-joined (empty cell: no KC info), responses "0"/"1".
inline constexpr std::string_view kCanonicalHeader = "student_id,question_id,kc_ids,response,timestamp";
inline constexpr char kKcDelimiter = '|';

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

Dataset parse_canonical(std::istream& in, std::vector<std::string>* warnings = nullptr);
Dataset parse_canonical(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

void write_canonical(const Dataset& dataset, std::ostream& out);
void write_canonical(const Dataset& dataset, const std::filesystem::path& path);

// Splits one CSV record, honouring double-quoted fields.
std::vector<std::string> split_csv_record(std::string_view line);

// Joins a problem name and step name with the ASCII unit separator (0x1F).
// Backslash escapes separators and backslashes inside either part, so the
// mapping is injective and reversible via split_question_id.
std::string compose_question_id(std::string_view problem_name, std::string_view step_name);
std::pair<std::string, std::string> split_question_id(std::string_view question_id);

}  // namespace ktbench
