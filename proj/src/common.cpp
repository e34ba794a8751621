#include "curec/common.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <iostream>

namespace curec {

void warn(const std::string& msg) {
  std::cerr << "[warn] " << msg << "\n";
}

std::string sha256_hex(const void* data, size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  if (EVP_Digest(data, len, digest, &digest_len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  std::string hex;
  hex.reserve(digest_len * 2);
  static const char* k = "0123456789abcdef";
  for (unsigned int i = 0; i < digest_len; ++i) {
    hex.push_back(k[digest[i] >> 4]);
    hex.push_back(k[digest[i] & 0xf]);
  }
  return hex;
}

}  // namespace curec
