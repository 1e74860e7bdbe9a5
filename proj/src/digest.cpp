#include "apdlh/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

namespace apdlh {

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[md[i] >> 4]);
        out.push_back(kHex[md[i] & 0x0f]);
    }
    return out;
}

std::string digest_of(std::initializer_list<std::string_view> parts) {
    std::string joined;
    for (auto part : parts) {
        joined.append(part);
        joined.push_back('\x1f');
    }
    return sha256_hex(joined);
}

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ ((b << 29) | (b >> 35));
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double keyed_unit(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t salt) {
    const std::uint64_t h = mix64(mix64(mix64(seed, a), b), salt);
    // 53 high bits -> [0,1)
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace apdlh
