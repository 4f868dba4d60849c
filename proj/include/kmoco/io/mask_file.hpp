#pragma once

#include <fstream>
#include <sstream>

#include "kmoco/io/raw.hpp"
#include "kmoco/motion/types.hpp"

namespace kmoco::io {

/// Text form of a binary line mask:
///   ny=64
///   lines=3,4,5,40
inline void save_mask(const fs::path& path, const LineMask& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
    out << "ny=" << m.ny() << "\nlines=";
    bool first = true;
    for (int y = 0; y < m.ny(); ++y)
        if (m[y] >= 0.5) {
            out << (first ? "" : ",") << y;
            first = false;
        }
    out << "\n";
}

inline LineMask load_mask(const fs::path& path) {
    const auto kv = read_key_values(path);
    const auto ny_it = kv.find("ny");
    if (ny_it == kv.end()) fail(ErrorCategory::bad_header, path.string() + ": missing key 'ny'");
    const long long ny = parse_int(ny_it->second, path.string() + " ny");
    if (ny < 2 || ny > max_dimension) fail(ErrorCategory::bad_header, path.string() + ": ny out of range");
    LineMask m(ImageMeta{2, static_cast<int>(ny), 1.0});
    if (const auto it = kv.find("lines"); it != kv.end()) {
        std::istringstream parts(it->second);
        std::string item;
        while (std::getline(parts, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            const long long y = parse_int(item, path.string() + " lines");
            if (y < 0 || y >= ny)
                fail(ErrorCategory::out_of_range, path.string() + ": line " + std::to_string(y) + " outside [0, " +
                                                      std::to_string(ny) + ")");
            m[static_cast<int>(y)] = 1.0;
        }
    }
    return m;
}

} // namespace kmoco::io
