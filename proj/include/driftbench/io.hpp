#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace driftbench {

std::string read_file(const std::filesystem::path& path);

// Writes via a sibling temp file and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// One compact JSON document per line, '\n'-terminated.
std::string to_jsonl(const std::vector<nlohmann::json>& rows);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

// Files in dir with the given extension, sorted by filename.
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                              std::string_view extension);

// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

std::vector<std::string> split(std::string_view s, char sep);

}  // namespace driftbench
