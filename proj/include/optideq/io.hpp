#pragma once

#include <string>
#include <string_view>

namespace optideq {

std::string read_file(const std::string& path);

// Writes to <path>.tmp and renames over `path`, so readers never see a
// partially written file. Creates missing parent directories.
void write_file_atomic(const std::string& path, std::string_view content);

// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);

}  // namespace optideq
