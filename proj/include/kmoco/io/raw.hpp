#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "kmoco/field/image.hpp"

namespace kmoco::io {

namespace fs = std::filesystem;

/// Largest accepted edge length of any loaded grid.
inline constexpr int max_dimension = 16384;

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Flat key=value text. Blank lines and lines starting with '#' are skipped.
inline std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& origin) {
    std::map<std::string, std::string> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorCategory::bad_header, origin + ":" + std::to_string(lineno) + ": expected key=value");
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

inline std::map<std::string, std::string> read_key_values(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
    return parse_key_values(in, path.string());
}

inline long long parse_int(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) fail(ErrorCategory::bad_header, what + ": '" + s + "' is not an integer");
    return v;
}

inline double parse_double(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) fail(ErrorCategory::bad_header, what + ": '" + s + "' is not a number");
    return v;
}

enum class RawDtype { float32, complex64 };

inline std::string_view dtype_name(RawDtype d) { return d == RawDtype::float32 ? "float32" : "complex64"; }

struct RawDescriptor {
    ImageMeta meta;
    RawDtype dtype = RawDtype::float32;

    std::uint64_t payload_bytes() const {
        return std::uint64_t(meta.nx) * std::uint64_t(meta.ny) * (dtype == RawDtype::float32 ? 4u : 8u);
    }
};

/// Sidecar path of a raw payload: "<payload>.hdr".
inline fs::path descriptor_path(const fs::path& payload) { return fs::path(payload.string() + ".hdr"); }

inline RawDescriptor read_descriptor(const fs::path& payload) {
    const fs::path hp = descriptor_path(payload);
    const auto kv = read_key_values(hp);
    auto get = [&](const char* key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) fail(ErrorCategory::bad_header, hp.string() + ": missing key '" + key + "'");
        return it->second;
    };
    RawDescriptor d;
    const long long nx = parse_int(get("nx"), hp.string() + " nx");
    const long long ny = parse_int(get("ny"), hp.string() + " ny");
    if (nx < 2 || ny < 2 || nx > max_dimension || ny > max_dimension)
        fail(ErrorCategory::bad_header, hp.string() + ": dimensions " + std::to_string(nx) + "x" + std::to_string(ny) +
                                            " outside [2, " + std::to_string(max_dimension) + "]");
    d.meta.nx = static_cast<int>(nx);
    d.meta.ny = static_cast<int>(ny);
    if (kv.count("spacing_mm")) d.meta.spacing_mm = parse_double(kv.at("spacing_mm"), hp.string() + " spacing_mm");
    if (!(d.meta.spacing_mm > 0.0) || !std::isfinite(d.meta.spacing_mm))
        fail(ErrorCategory::bad_header, hp.string() + ": spacing_mm must be positive");
    const std::string& dt = get("dtype");
    if (dt == "float32") d.dtype = RawDtype::float32;
    else if (dt == "complex64") d.dtype = RawDtype::complex64;
    else fail(ErrorCategory::unknown_dtype, hp.string() + ": unknown dtype '" + dt + "'");
    if (kv.count("payload_bytes")) {
        const long long declared = parse_int(kv.at("payload_bytes"), hp.string() + " payload_bytes");
        if (declared < 0 || std::uint64_t(declared) != d.payload_bytes())
            fail(ErrorCategory::length_mismatch, hp.string() + ": payload_bytes=" + std::to_string(declared) +
                                                     " but nx*ny*" + std::string(dtype_name(d.dtype)) + " needs " +
                                                     std::to_string(d.payload_bytes()));
    }
    return d;
}

namespace detail {

inline std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
    return v;
}

inline void put_f32(std::vector<char>& buf, float f) {
    const std::uint32_t u = to_le(std::bit_cast<std::uint32_t>(f));
    char b[4];
    std::memcpy(b, &u, 4);
    buf.insert(buf.end(), b, b + 4);
}

inline float get_f32(const char* p) {
    std::uint32_t u;
    std::memcpy(&u, p, 4);
    return std::bit_cast<float>(to_le(u));
}

inline void write_file(const fs::path& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCategory::io, "short write to " + path.string());
}

inline void write_descriptor(const fs::path& payload, const RawDescriptor& d) {
    std::ofstream out(descriptor_path(payload), std::ios::trunc);
    if (!out) fail(ErrorCategory::io, "cannot write " + descriptor_path(payload).string());
    out.precision(17);
    out << "nx=" << d.meta.nx << "\nny=" << d.meta.ny << "\nspacing_mm=" << d.meta.spacing_mm
        << "\ndtype=" << dtype_name(d.dtype) << "\npayload_bytes=" << d.payload_bytes() << "\n";
}

/// Reads exactly the payload the descriptor promises; size is checked
/// against the file before any buffer is allocated.
inline std::vector<char> read_payload(const fs::path& path, const RawDescriptor& d) {
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec) fail(ErrorCategory::io, "cannot stat " + path.string() + ": " + ec.message());
    const std::uint64_t need = d.payload_bytes();
    if (size < need)
        fail(ErrorCategory::truncated, path.string() + ": payload truncated at byte " + std::to_string(size) +
                                           ", descriptor requires " + std::to_string(need) + " bytes");
    if (size > need)
        fail(ErrorCategory::length_mismatch, path.string() + ": payload has " + std::to_string(size) +
                                                 " bytes, descriptor requires " + std::to_string(need));
    std::vector<char> buf(static_cast<std::size_t>(need));
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
    in.read(buf.data(), static_cast<std::streamsize>(need));
    if (in.gcount() != static_cast<std::streamsize>(need))
        fail(ErrorCategory::truncated,
             path.string() + ": payload truncated at byte " + std::to_string(in.gcount()) + " while reading");
    return buf;
}

} // namespace detail

inline void save_raw(const fs::path& path, const RealImage& img) {
    std::vector<char> buf;
    buf.reserve(img.size() * 4);
    for (double v : img.data()) detail::put_f32(buf, static_cast<float>(v));
    detail::write_file(path, buf);
    detail::write_descriptor(path, {img.meta(), RawDtype::float32});
}

template <class Domain>
void save_raw(const fs::path& path, const Grid<cplx, Domain>& k) {
    std::vector<char> buf;
    buf.reserve(k.size() * 8);
    for (const cplx& v : k.data()) {
        detail::put_f32(buf, static_cast<float>(v.real()));
        detail::put_f32(buf, static_cast<float>(v.imag()));
    }
    detail::write_file(path, buf);
    detail::write_descriptor(path, {k.meta(), RawDtype::complex64});
}

using RawData = std::variant<RealImage, KSpace>;

/// Loads either dtype; float32 becomes a RealImage, complex64 a KSpace.
inline RawData load_raw_any(const fs::path& path) {
    const RawDescriptor d = read_descriptor(path);
    const auto buf = detail::read_payload(path, d);
    if (d.dtype == RawDtype::float32) {
        RealImage img(d.meta);
        for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = detail::get_f32(buf.data() + 4 * i);
        return img;
    }
    KSpace k(d.meta);
    for (std::size_t i = 0; i < k.size(); ++i)
        k.data()[i] = cplx(detail::get_f32(buf.data() + 8 * i), detail::get_f32(buf.data() + 8 * i + 4));
    return k;
}

inline RealImage load_raw_image(const fs::path& path) {
    auto any = load_raw_any(path);
    if (auto* img = std::get_if<RealImage>(&any)) return std::move(*img);
    fail(ErrorCategory::unsupported_dtype, path.string() + ": expected float32 image, found complex64");
}

inline KSpace load_raw_kspace(const fs::path& path) {
    auto any = load_raw_any(path);
    if (auto* k = std::get_if<KSpace>(&any)) return std::move(*k);
    fail(ErrorCategory::unsupported_dtype, path.string() + ": expected complex64 k-space, found float32");
}

} // namespace kmoco::io
