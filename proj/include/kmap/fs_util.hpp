#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace kmap {

// Writes `contents` to a sibling temp file, flushes it and renames it over
// `file`. Throws IoError.
void atomic_write_file(const std::filesystem::path& file, std::string_view contents);

// Throws IoError when the file cannot be opened.
std::string read_file(const std::filesystem::path& file);

// Percent-encodes everything outside [A-Za-z0-9_-] so an arbitrary id can be
// used as a single path component.
std::string encode_path_component(std::string_view id);

}  // namespace kmap
