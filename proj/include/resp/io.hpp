#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "resp/core.hpp"

namespace resp::io {

std::string read_text(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, so readers never see a partial file.
void write_text_atomic(const std::filesystem::path& path, std::string_view content);

/// Appends one line with a single write(2) on an O_APPEND descriptor.
void append_line(const std::filesystem::path& path, std::string_view line);

std::string sha256_hex(std::string_view data);
std::string sha256_file_hex(const std::filesystem::path& path);
std::string base64_encode(std::string_view data);

/// Parses a JSON Lines file; blank lines are skipped. Errors carry the 1-based line number.
template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Input, "FileNotFound", path.string());
  std::vector<T> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line).get<T>());
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Input, "SchemaViolation",
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorKind::Input, "SchemaViolation",
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
std::string to_jsonl(const std::vector<T>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += json(r).dump();
    out += '\n';
  }
  return out;
}

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& rows) {
  write_text_atomic(path, to_jsonl(rows));
}

}  // namespace resp::io
