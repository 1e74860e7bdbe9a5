#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace apdlh {

// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

// Joins parts with a unit separator before hashing so ("ab","c") and
// ("a","bc") never collide.
std::string digest_of(std::initializer_list<std::string_view> parts);

// Stateless uniform draw in [0,1) keyed by (seed, a, b, salt). Used wherever a
// scripted component needs a reproducible coin flip that must not depend on
// call order or thread scheduling.
double keyed_unit(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t salt);

// Mixes two 64-bit values into one (splitmix64 finalizer over a ^ rotl(b)).
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

}  // namespace apdlh
