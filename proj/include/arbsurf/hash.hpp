#pragma once

#include <string>
#include <string_view>

namespace arbsurf {

std::string sha1_hex(std::string_view data);
// Git blob id: SHA-1 of "blob <size>\0" followed by the content.
std::string git_blob_sha1(std::string_view content);
std::string git_blob_sha1_file(const std::string& path);

}  // namespace arbsurf
