#pragma once

#include <string>

namespace rtnet::io {

/// Writes to `path.tmp` and renames over `path`, so readers never see a
/// partial file. Creates missing parent directories.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

/// Quotes a CSV cell when it holds a comma, quote or newline.
std::string csv_cell(const std::string& text);

/// Shortest round-trip decimal form of a double.
std::string number(double v);

}  // namespace rtnet::io
