#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "kmoco/io/mask_file.hpp"
#include "kmoco/io/nifti.hpp"
#include "kmoco/io/phantom.hpp"
#include "kmoco/io/png.hpp"
#include "kmoco/io/raw.hpp"
#include "kmoco/io/weights.hpp"

using namespace kmoco;
namespace fs = std::filesystem;

namespace {

class IoTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("kmoco_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    fs::path path(const std::string& name) const { return dir_ / name; }

    fs::path dir_;
};

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream(p, std::ios::trunc) << s;
}

void write_bytes(const fs::path& p, const std::vector<char>& b) {
    std::ofstream(p, std::ios::binary | std::ios::trunc).write(b.data(), static_cast<std::streamsize>(b.size()));
}

ErrorCategory category_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.category();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCategory::invalid_argument;
}

template <class V>
void put(std::vector<char>& b, std::size_t off, V v, bool big_endian) {
    char tmp[sizeof(V)];
    std::memcpy(tmp, &v, sizeof(V));
    if (big_endian) std::reverse(tmp, tmp + sizeof(V));
    std::memcpy(b.data() + off, tmp, sizeof(V));
}

// Minimal int16 NIfTI-1 file written field by field from the format layout.
std::vector<char> int16_nifti(int nx, int ny, int nz, float slope, float inter, bool big_endian,
                              const std::function<std::int16_t(int, int, int)>& value) {
    std::vector<char> b(352 + 2 * std::size_t(nx) * ny * nz, 0);
    put<std::int32_t>(b, 0, 348, big_endian);
    const std::int16_t dims[8] = {3, std::int16_t(nx), std::int16_t(ny), std::int16_t(nz), 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) put<std::int16_t>(b, 40 + 2 * i, dims[i], big_endian);
    put<std::int16_t>(b, 70, 4, big_endian);
    put<std::int16_t>(b, 72, 16, big_endian);
    const float pix[4] = {1.0f, 0.9f, 1.1f, 3.0f};
    for (int i = 0; i < 4; ++i) put<float>(b, 76 + 4 * i, pix[i], big_endian);
    put<float>(b, 108, 352.0f, big_endian);
    put<float>(b, 112, slope, big_endian);
    put<float>(b, 116, inter, big_endian);
    std::memcpy(b.data() + 344, "n+1\0", 4);
    std::size_t off = 352;
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x, off += 2) put<std::int16_t>(b, off, value(x, y, z), big_endian);
    return b;
}

} // namespace

TEST_F(IoTest, RawImageRoundTripIsExactForFloat32Values) {
    RealImage img(ImageMeta{6, 5, 0.75});
    for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = double(float(0.1 * double(i) - 1.0));
    io::save_raw(path("a.raw"), img);
    const auto back = io::load_raw_image(path("a.raw"));
    EXPECT_EQ(back.meta(), img.meta());
    EXPECT_EQ(back.storage(), img.storage());
    EXPECT_EQ(fs::file_size(path("a.raw")), 120u);
}

TEST_F(IoTest, RawKspaceRoundTripAndLittleEndianLayout) {
    KSpace k(ImageMeta{2, 2, 1.0});
    k(0, 0) = cplx(1.0, -2.0);
    k(1, 1) = cplx(0.5, 0.25);
    io::save_raw(path("k.raw"), k);
    const auto back = io::load_raw_kspace(path("k.raw"));
    EXPECT_EQ(back.storage(), k.storage());
    std::ifstream in(path("k.raw"), std::ios::binary);
    unsigned char first[4];
    in.read(reinterpret_cast<char*>(first), 4);
    // 1.0f is 0x3f800000; little-endian puts 0x00 first.
    EXPECT_EQ(first[0], 0x00);
    EXPECT_EQ(first[3], 0x3f);
    EXPECT_EQ(category_of([&] { io::load_raw_image(path("k.raw")); }), ErrorCategory::unsupported_dtype);
}

TEST_F(IoTest, RawTruncatedPayloadReportsPosition) {
    io::save_raw(path("t.raw"), RealImage(ImageMeta{4, 4, 1.0}, 1.0));
    fs::resize_file(path("t.raw"), 50);
    try {
        io::load_raw_image(path("t.raw"));
        FAIL() << "expected truncation";
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::truncated);
        EXPECT_NE(std::string(e.what()).find("byte 50"), std::string::npos) << e.what();
    }
}

TEST_F(IoTest, RawDescriptorErrors) {
    write_bytes(path("p.raw"), std::vector<char>(64, 0));
    write_text(path("p.raw.hdr"), "nx=4\nny=4\ndtype=float16\n");
    EXPECT_EQ(category_of([&] { io::load_raw_any(path("p.raw")); }), ErrorCategory::unknown_dtype);
    write_text(path("p.raw.hdr"), "nx=4\nny=4\ndtype=float32\npayload_bytes=60\n");
    EXPECT_EQ(category_of([&] { io::load_raw_any(path("p.raw")); }), ErrorCategory::length_mismatch);
    write_text(path("p.raw.hdr"), "nx=4\ndtype=float32\n");
    EXPECT_EQ(category_of([&] { io::load_raw_any(path("p.raw")); }), ErrorCategory::bad_header);
    write_text(path("p.raw.hdr"), "nx=4\nny=2\ndtype=float32\n");
    EXPECT_EQ(category_of([&] { io::load_raw_any(path("p.raw")); }), ErrorCategory::length_mismatch);
    EXPECT_EQ(category_of([&] { io::load_raw_any(path("missing.raw")); }), ErrorCategory::io);
}

TEST_F(IoTest, NiftiInt16WithScalingBothByteOrders) {
    auto value = [](int x, int y, int z) { return std::int16_t(x + 10 * y + 100 * z - 50); };
    for (bool be : {false, true}) {
        write_bytes(path("v.nii"), int16_nifti(5, 4, 3, 2.0f, 1.0f, be, value));
        const auto v = io::load_nifti(path("v.nii"));
        ASSERT_EQ(v.dim, (std::array<int, 3>{5, 4, 3}));
        EXPECT_NEAR(v.pixdim[0], 0.9, 1e-6);
        for (int z = 0; z < 3; ++z)
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 5; ++x) EXPECT_EQ(v.at(x, y, z), 2.0f * value(x, y, z) + 1.0f);
    }
}

TEST_F(IoTest, NiftiZeroSlopeMeansUnscaled) {
    write_bytes(path("v.nii"), int16_nifti(2, 2, 2, 0.0f, 7.0f, false, [](int x, int, int) { return std::int16_t(x); }));
    EXPECT_EQ(io::load_nifti(path("v.nii")).at(1, 0, 0), 1.0f);
}

TEST_F(IoTest, NiftiSlicesAlongEachAxis) {
    io::Volume v;
    v.dim = {4, 3, 2};
    v.pixdim = {0.5, 0.6, 2.0};
    v.data.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) v.data[i] = float(i);
    io::save_nifti(path("f.nii"), v);
    const auto back = io::load_nifti(path("f.nii"));
    EXPECT_EQ(back.data, v.data);
    const auto z1 = io::load_nifti_slice(path("f.nii"), 2, 1);
    EXPECT_EQ(z1.nx(), 4);
    EXPECT_EQ(z1.ny(), 3);
    EXPECT_NEAR(z1.meta().spacing_mm, 0.5, 1e-7);
    EXPECT_EQ(z1(3, 2), v.at(3, 2, 1));
    const auto x2 = io::volume_slice(back, 0, 2);
    EXPECT_EQ(x2.nx(), 3);
    EXPECT_EQ(x2.ny(), 2);
    EXPECT_EQ(x2(1, 1), v.at(2, 1, 1));
    const auto y0 = io::volume_slice(back, 1, 0);
    EXPECT_EQ(y0(3, 1), v.at(3, 0, 1));
    EXPECT_EQ(category_of([&] { io::volume_slice(back, 2, 2); }), ErrorCategory::out_of_range);
}

TEST_F(IoTest, NiftiRejections) {
    const auto good = int16_nifti(2, 2, 2, 1.0f, 0.0f, false, [](int, int, int) { return std::int16_t(1); });
    write_bytes(path("gz.nii"), {char(0x1f), char(0x8b), 8, 0});
    EXPECT_EQ(category_of([&] { io::load_nifti(path("gz.nii")); }), ErrorCategory::compressed);
    write_bytes(path("short.nii"), std::vector<char>(good.begin(), good.begin() + 200));
    EXPECT_EQ(category_of([&] { io::load_nifti(path("short.nii")); }), ErrorCategory::truncated);
    write_bytes(path("body.nii"), std::vector<char>(good.begin(), good.end() - 3));
    EXPECT_EQ(category_of([&] { io::load_nifti(path("body.nii")); }), ErrorCategory::truncated);
    auto bad = good;
    put<std::int16_t>(bad, 70, 64, false);
    write_bytes(path("f64.nii"), bad);
    EXPECT_EQ(category_of([&] { io::load_nifti(path("f64.nii")); }), ErrorCategory::unsupported_dtype);
    bad = good;
    std::memcpy(bad.data() + 344, "ni1\0", 4);
    write_bytes(path("pair.nii"), bad);
    EXPECT_EQ(category_of([&] { io::load_nifti(path("pair.nii")); }), ErrorCategory::bad_header);
    bad = good;
    put<std::int16_t>(bad, 40, 4, false);
    put<std::int16_t>(bad, 48, 2, false);
    write_bytes(path("4d.nii"), bad);
    EXPECT_EQ(category_of([&] { io::load_nifti(path("4d.nii")); }), ErrorCategory::bad_header);
}

TEST_F(IoTest, MaskFileRoundTrip) {
    LineMask m(ImageMeta{8, 10, 1.0});
    m[0] = m[4] = m[9] = 1.0;
    io::save_mask(path("m.txt"), m);
    const auto back = io::load_mask(path("m.txt"));
    EXPECT_EQ(back.line_values, m.line_values);
    write_text(path("bad.txt"), "ny=4\nlines=1,4\n");
    EXPECT_EQ(category_of([&] { io::load_mask(path("bad.txt")); }), ErrorCategory::out_of_range);
    write_text(path("empty.txt"), "ny=4\nlines=\n");
    EXPECT_EQ(io::load_mask(path("empty.txt")).count(), 0u);
}

TEST_F(IoTest, PngWindowLevelAndSignedMap) {
    RealImage img(ImageMeta{3, 2, 1.0});
    for (int y = 0; y < 2; ++y) {
        img(1, y) = 0.5;
        img(2, y) = 2.0;
    }
    const auto g = io::window_level(img, 1.0, 0.5);
    EXPECT_EQ(g.pixels, (std::vector<std::uint8_t>{0, 128, 255, 0, 128, 255}));
    RealImage d(ImageMeta{3, 2, 1.0});
    d(0, 0) = -1.0;
    d(2, 0) = 0.5;
    EXPECT_EQ(io::signed_map(d).pixels, (std::vector<std::uint8_t>{1, 128, 192, 128, 128, 128}));
    EXPECT_EQ(io::signed_map(RealImage(ImageMeta{2, 2, 1.0})).pixels, std::vector<std::uint8_t>(4, 128));
    io::export_png(phantom(32), path("p.png"));
    const auto back = io::read_png(path("p.png"));
    EXPECT_EQ(back.width, 32);
    const auto p = phantom(32);
    const auto [lo, hi] = std::minmax_element(p.data().begin(), p.data().end());
    EXPECT_EQ(back.pixels, io::window_level(p, *hi - *lo, (*hi + *lo) / 2.0).pixels);
}

TEST_F(IoTest, WeightsRoundTripRestoresModel) {
    CorrectorConfig cfg;
    cfg.levels = 2;
    cfg.base_channels = 4;
    cfg.shifted_windows = true;
    Corrector<float> m(cfg, 3);
    for (auto& e : m.params().entries())
        for (std::size_t i = 0; i < e.var->value.size(); ++i) e.var->value[i] += 0.01f * float(i % 7);
    io::save_corrector(path("c.kmc"), m);
    const auto back = io::load_corrector(path("c.kmc"));
    EXPECT_EQ(back.config().levels, 2);
    EXPECT_TRUE(back.config().shifted_windows);
    const auto& a = m.params().entries();
    const auto& b = back.params().entries();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t i = 0; i < a[k].var->value.size(); ++i) ASSERT_EQ(a[k].var->value[i], b[k].var->value[i]);
    EXPECT_EQ(category_of([&] { io::load_detector(path("c.kmc")); }), ErrorCategory::bad_header);

    DetectorConfig dc;
    dc.levels = 2;
    dc.base_channels = 4;
    dc.features = DetectorFeatures::log_magnitude;
    dc.threshold = 0.3;
    io::save_detector(path("d.kmc"), Detector<float>(dc, 1));
    const auto d = io::load_detector(path("d.kmc"));
    EXPECT_EQ(d.config().features, DetectorFeatures::log_magnitude);
    EXPECT_DOUBLE_EQ(d.config().threshold, 0.3);
}

TEST_F(IoTest, WeightsCorruptionIsDetected) {
    CorrectorConfig cfg;
    cfg.levels = 2;
    cfg.base_channels = 4;
    io::save_corrector(path("c.kmc"), Corrector<float>(cfg, 3));
    const auto size = fs::file_size(path("c.kmc"));
    fs::resize_file(path("c.kmc"), size - 10);
    EXPECT_EQ(category_of([&] { io::load_corrector(path("c.kmc")); }), ErrorCategory::truncated);
    write_text(path("x.kmc"), "garbage");
    EXPECT_EQ(category_of([&] { io::load_corrector(path("x.kmc")); }), ErrorCategory::bad_header);
}
