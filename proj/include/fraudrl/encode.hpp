#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fraudrl {

std::string base64_encode(const unsigned char* data, std::size_t len);
std::vector<unsigned char> base64_decode(std::string_view text);

// SHA-256, used for run manifests and replay verification.
std::string sha256_hex(std::string_view data);
std::string sha256_file_hex(const std::string& path);

}  // namespace fraudrl
