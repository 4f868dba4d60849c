#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "kmoco/field/image.hpp"
#include "kmoco/io/raw.hpp"

namespace kmoco::io {

/// Uncompressed single-file NIfTI-1 reader (float32 / int16, 3D) and a
/// float32 writer.

inline constexpr int nifti_header_size = 348;
inline constexpr std::int16_t nifti_int16 = 4;
inline constexpr std::int16_t nifti_float32 = 16;

struct Volume {
    std::array<int, 3> dim{};
    std::array<double, 3> pixdim{1.0, 1.0, 1.0};
    std::vector<float> data;  ///< x fastest, then y, then z

    std::size_t size() const { return std::size_t(dim[0]) * dim[1] * dim[2]; }
    float at(int x, int y, int z) const {
        return data[(std::size_t(z) * dim[1] + y) * std::size_t(dim[0]) + x];
    }
};

namespace detail {

template <class V>
V read_scalar(const char* p, bool swap) {
    V v;
    std::memcpy(&v, p, sizeof(V));
    if (swap) {
        char b[sizeof(V)];
        std::memcpy(b, &v, sizeof(V));
        std::reverse(b, b + sizeof(V));
        std::memcpy(&v, b, sizeof(V));
    }
    return v;
}

template <class V>
void write_scalar(char* p, V v) {
    std::memcpy(p, &v, sizeof(V));
}

} // namespace detail

inline Volume load_nifti(const fs::path& path) {
    std::error_code ec;
    const auto file_size = fs::file_size(path, ec);
    if (ec) fail(ErrorCategory::io, "cannot stat " + path.string() + ": " + ec.message());
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCategory::io, "cannot open " + path.string());

    std::array<char, nifti_header_size> h{};
    in.read(h.data(), nifti_header_size);
    const auto got = in.gcount();
    if (got >= 2 && static_cast<unsigned char>(h[0]) == 0x1f && static_cast<unsigned char>(h[1]) == 0x8b)
        fail(ErrorCategory::compressed, path.string() + ": gzip stream; decompress before loading");
    if (got != nifti_header_size)
        fail(ErrorCategory::truncated, path.string() + ": header truncated at byte " + std::to_string(got) + " of 348");

    bool swap = false;
    std::int32_t sizeof_hdr = detail::read_scalar<std::int32_t>(h.data(), false);
    if (sizeof_hdr != nifti_header_size) {
        swap = true;
        sizeof_hdr = detail::read_scalar<std::int32_t>(h.data(), true);
    }
    if (sizeof_hdr != nifti_header_size)
        fail(ErrorCategory::bad_header, path.string() + ": sizeof_hdr is not 348");
    if (std::memcmp(h.data() + 344, "n+1\0", 4) != 0)
        fail(ErrorCategory::bad_header, path.string() + ": magic is not 'n+1' (only single-file NIfTI-1 is supported)");

    std::array<std::int16_t, 8> dim{};
    for (int i = 0; i < 8; ++i) dim[static_cast<std::size_t>(i)] = detail::read_scalar<std::int16_t>(h.data() + 40 + 2 * i, swap);
    const int ndim = dim[0];
    bool ok = ndim == 3 || (ndim >= 4 && ndim <= 7);
    for (int i = 4; ok && i <= ndim; ++i) ok = dim[static_cast<std::size_t>(i)] == 1;
    if (!ok) fail(ErrorCategory::bad_header, path.string() + ": only 3D volumes are supported (dim[0]=" + std::to_string(ndim) + ")");

    Volume v;
    for (int i = 0; i < 3; ++i) {
        const int d = dim[static_cast<std::size_t>(i + 1)];
        if (d < 1 || d > max_dimension)
            fail(ErrorCategory::bad_header, path.string() + ": dim[" + std::to_string(i + 1) + "]=" + std::to_string(d) + " out of range");
        v.dim[static_cast<std::size_t>(i)] = d;
        const double pd = std::abs(detail::read_scalar<float>(h.data() + 76 + 4 * (i + 1), swap));
        v.pixdim[static_cast<std::size_t>(i)] = (std::isfinite(pd) && pd > 0.0) ? pd : 1.0;
    }

    const std::int16_t datatype = detail::read_scalar<std::int16_t>(h.data() + 70, swap);
    std::size_t bytes = 0;
    if (datatype == nifti_float32) bytes = 4;
    else if (datatype == nifti_int16) bytes = 2;
    else fail(ErrorCategory::unsupported_dtype, path.string() + ": datatype " + std::to_string(datatype) + " (need float32 or int16)");

    const float vox_offset = detail::read_scalar<float>(h.data() + 108, swap);
    if (!std::isfinite(vox_offset) || vox_offset < float(nifti_header_size) || vox_offset > float(file_size))
        fail(ErrorCategory::bad_header, path.string() + ": vox_offset out of range");
    float slope = detail::read_scalar<float>(h.data() + 112, swap);
    float inter = detail::read_scalar<float>(h.data() + 116, swap);
    if (slope == 0.0f || !std::isfinite(slope)) {
        slope = 1.0f;
        inter = 0.0f;
    }
    if (!std::isfinite(inter)) inter = 0.0f;

    const auto offset = static_cast<std::uint64_t>(vox_offset);
    const std::uint64_t need = std::uint64_t(v.size()) * bytes;
    if (file_size < offset + need)
        fail(ErrorCategory::truncated, path.string() + ": voxel data truncated at byte " + std::to_string(file_size) +
                                           ", header requires " + std::to_string(offset + need));

    std::vector<char> raw(static_cast<std::size_t>(need));
    in.seekg(static_cast<std::streamoff>(offset));
    in.read(raw.data(), static_cast<std::streamsize>(need));
    if (in.gcount() != static_cast<std::streamsize>(need))
        fail(ErrorCategory::truncated, path.string() + ": voxel data truncated while reading");

    v.data.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const float x = bytes == 4 ? detail::read_scalar<float>(raw.data() + 4 * i, swap)
                                   : float(detail::read_scalar<std::int16_t>(raw.data() + 2 * i, swap));
        v.data[i] = x * slope + inter;
    }
    return v;
}

/// Slice perpendicular to `axis` (0 = x, 1 = y, 2 = z). The in-plane
/// spacing is taken from the first remaining axis.
inline RealImage volume_slice(const Volume& v, int axis, int index) {
    require(axis >= 0 && axis <= 2, ErrorCategory::invalid_argument, "slice axis must be 0, 1 or 2");
    const int depth = v.dim[static_cast<std::size_t>(axis)];
    require(index >= 0 && index < depth, ErrorCategory::out_of_range,
            "slice index " + std::to_string(index) + " outside [0, " + std::to_string(depth) + ")");
    const int ax_u = axis == 0 ? 1 : 0;
    const int ax_v = axis == 2 ? 1 : 2;
    const int nu = v.dim[static_cast<std::size_t>(ax_u)], nv = v.dim[static_cast<std::size_t>(ax_v)];
    RealImage img(ImageMeta{nu, nv, v.pixdim[static_cast<std::size_t>(ax_u)]});
    for (int b = 0; b < nv; ++b)
        for (int a = 0; a < nu; ++a) {
            std::array<int, 3> c{};
            c[static_cast<std::size_t>(axis)] = index;
            c[static_cast<std::size_t>(ax_u)] = a;
            c[static_cast<std::size_t>(ax_v)] = b;
            img(a, b) = v.at(c[0], c[1], c[2]);
        }
    return img;
}

inline RealImage load_nifti_slice(const fs::path& path, int axis, int index) {
    return volume_slice(load_nifti(path), axis, index);
}

/// Minimal float32 NIfTI-1 writer (vox_offset 352, unit scaling).
inline void save_nifti(const fs::path& path, const Volume& v) {
    require(v.data.size() == v.size(), ErrorCategory::shape_mismatch, "save_nifti: data size does not match dims");
    std::vector<char> buf(352 + 4 * v.size(), 0);
    char* h = buf.data();
    detail::write_scalar<std::int32_t>(h, nifti_header_size);
    const std::int16_t dims[8] = {3, std::int16_t(v.dim[0]), std::int16_t(v.dim[1]), std::int16_t(v.dim[2]), 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) detail::write_scalar<std::int16_t>(h + 40 + 2 * i, dims[i]);
    detail::write_scalar<std::int16_t>(h + 70, nifti_float32);
    detail::write_scalar<std::int16_t>(h + 72, 32);
    const float pix[8] = {1.0f, float(v.pixdim[0]), float(v.pixdim[1]), float(v.pixdim[2]), 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) detail::write_scalar<float>(h + 76 + 4 * i, pix[i]);
    detail::write_scalar<float>(h + 108, 352.0f);
    detail::write_scalar<float>(h + 112, 1.0f);
    std::memcpy(h + 344, "n+1\0", 4);
    std::memcpy(h + 352, v.data.data(), 4 * v.size());
    detail::write_file(path, buf);
}

} // namespace kmoco::io
