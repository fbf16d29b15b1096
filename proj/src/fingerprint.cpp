#include "fsuda/fingerprint.hpp"

#include <cstdint>
#include <cstdio>

namespace fsuda {

std::string config_fingerprint(const std::map<std::string, std::string>& settings) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [k, v] : settings) feed(k + "=" + v + ";");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace fsuda
