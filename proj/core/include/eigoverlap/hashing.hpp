#pragma once

#include <string>
#include <string_view>

namespace eigoverlap {

/// Lowercase hex SHA-1 of "blob <len>\0<content>", as git computes it.
std::string git_blob_sha1(std::string_view content);
std::string sha256_hex(std::string_view content);

}  // namespace eigoverlap
