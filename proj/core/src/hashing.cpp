#include "eigoverlap/hashing.hpp"

#include <openssl/evp.h>

#include <memory>

#include "eigoverlap/error.hpp"

namespace eigoverlap {
namespace {

std::string digest_hex(const EVP_MD* md, std::string_view a, std::string_view b) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), md, nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), a.data(), a.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), b.data(), b.size()) != 1) {
    throw Error("digest initialisation failed");
  }
  unsigned char buf[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), buf, &len) != 1) throw Error("digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[buf[k] >> 4];
    out += hex[buf[k] & 15];
  }
  return out;
}

}  // namespace

std::string git_blob_sha1(std::string_view content) {
  std::string header = "blob " + std::to_string(content.size());
  header.push_back('\0');
  return digest_hex(EVP_sha1(), header, content);
}

std::string sha256_hex(std::string_view content) { return digest_hex(EVP_sha256(), content, {}); }

}  // namespace eigoverlap
