#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace driftbench {

// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

// First 16 hex digits of the SHA-256 of the given parts joined by '\x1f'.
std::string stable_id(std::initializer_list<std::string_view> parts);

}  // namespace driftbench
