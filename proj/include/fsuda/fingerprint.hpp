#ifndef FSUDA_FINGERPRINT_HPP
#define FSUDA_FINGERPRINT_HPP

#include <map>
#include <string>

namespace fsuda {

/// 64-bit FNV-1a over "key=value;" pairs in key order, as 16 hex digits.
std::string config_fingerprint(const std::map<std::string, std::string>& settings);

}  // namespace fsuda

#endif  // FSUDA_FINGERPRINT_HPP
