#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace surgseg {

std::string read_text_file(const std::string& path);

/// Writes to "<path>.tmp" and renames over `path`, so readers never observe
/// a partially written file.
void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::string& path, std::string_view text);

}  // namespace surgseg
