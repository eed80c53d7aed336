#pragma once

#include <string>

namespace dfnsm {

// Writes `contents` to `path` via a temp file in the same directory followed
// by a rename, so readers never observe a truncated file. Throws IoError.
void atomic_write_file(const std::string& path, const std::string& contents);

// Reads a whole file as bytes. Throws IoError if missing/unreadable.
std::string read_file(const std::string& path);

}  // namespace dfnsm
