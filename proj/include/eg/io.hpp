#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace eg::io {

using Json = nlohmann::json;

struct CsvRow {
    std::size_t line = 0;  // 1-based line where the record starts
    std::vector<std::string> fields;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<CsvRow> rows;

    // Index of a header column, or nullopt.
    std::optional<std::size_t> column(std::string_view name) const;
};

// RFC 4180 reader: quoted fields may hold commas, quotes ("") and newlines.
// Throws ParseError on unterminated quotes or rows whose width differs from the header.
CsvTable parse_csv(std::string_view content, const std::string& origin = "<memory>");
CsvTable read_csv(const std::filesystem::path& path);

std::string csv_escape(std::string_view field);
std::string csv_line(const std::vector<std::string>& fields);

struct JsonlRecord {
    std::size_t line = 0;
    Json value;
};

// Blank lines are skipped. Throws ParseError naming the line on bad JSON.
std::vector<JsonlRecord> read_jsonl(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
// Creates parent directories. Throws IoError when the file cannot be written.
void write_text(const std::filesystem::path& path, std::string_view content);
void append_text(const std::filesystem::path& path, std::string_view content);

// Fixed-precision formatting used by every CSV writer so reruns are byte-identical.
std::string fmt_num(double value, int precision = 6);
// Empty string for nullopt / non-finite.
std::string fmt_opt(std::optional<double> value, int precision = 6);

// null for nullopt / non-finite values.
Json json_num(std::optional<double> value);

}  // namespace eg::io
