#pragma once

#include <filesystem>
#include <string>

namespace asr {

/// Writes `contents` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Throws InputError when the file is missing or unreadable.
std::string read_file(const std::filesystem::path& path);

}  // namespace asr
