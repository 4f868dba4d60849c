#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "kmoco/field/fft.hpp"
#include "kmoco/field/transform.hpp"
#include "kmoco/io/phantom.hpp"

using namespace kmoco;

namespace {

// Direct O(N^4) centred orthonormal DFT, independent of the FFT backend.
KSpace naive_dft(const ComplexImage& img, int sign = -1) {
    const int nx = img.nx(), ny = img.ny();
    const int cx = nx / 2, cy = ny / 2;
    KSpace out(img.meta());
    const double norm = 1.0 / std::sqrt(double(nx) * ny);
    for (int ky = 0; ky < ny; ++ky)
        for (int kx = 0; kx < nx; ++kx) {
            cplx acc = 0.0;
            for (int y = 0; y < ny; ++y)
                for (int x = 0; x < nx; ++x) {
                    const double ph = sign * 2.0 * std::numbers::pi *
                                      (double(kx - cx) * (x - cx) / nx + double(ky - cy) * (y - cy) / ny);
                    acc += img(x, y) * cplx(std::cos(ph), std::sin(ph));
                }
            out(kx, ky) = acc * norm;
        }
    return out;
}

RealImage random_image(Rng& rng, int nx, int ny) {
    RealImage img(ImageMeta{nx, ny, 1.0});
    for (auto& v : img.data()) v = rng.uniform(-1.0, 1.0);
    return img;
}

double max_abs_diff(std::span<const cplx> a, std::span<const cplx> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST(ImageMeta, RejectsDegenerateGrids) {
    EXPECT_THROW(RealImage(ImageMeta{1, 8, 1.0}), Error);
    EXPECT_THROW(RealImage(ImageMeta{8, 8, 0.0}), Error);
    EXPECT_NO_THROW(RealImage(ImageMeta{4, 4, 1.0}));
}

TEST(Fft, ConstantImageHasOnlyDc) {
    RealImage img(ImageMeta{4, 4, 1.0}, 1.0);
    const KSpace k = fft2c(img);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            const cplx expect = (x == 2 && y == 2) ? cplx(4.0, 0.0) : cplx(0.0, 0.0);
            EXPECT_NEAR(std::abs(k(x, y) - expect), 0.0, 1e-12);
        }
}

TEST(Fft, DeltaMatchesNaiveDft) {
    RealImage img(ImageMeta{8, 8, 1.0});
    img(0, 0) = 1.0;
    const KSpace k = fft2c(img);
    const KSpace ref = naive_dft(to_complex(img));
    for (std::size_t i = 0; i < k.size(); ++i) EXPECT_NEAR(std::abs(k.data()[i]), 1.0 / 8.0, 1e-12);
    EXPECT_LT(max_abs_diff(k.data(), ref.data()), 1e-12);
}

TEST(Fft, MatchesNaiveDftOnOddAndEvenSizes) {
    Rng rng(3);
    for (auto [nx, ny] : {std::pair{5, 7}, std::pair{8, 6}, std::pair{9, 9}}) {
        const RealImage img = random_image(rng, nx, ny);
        EXPECT_LT(max_abs_diff(fft2c(img).data(), naive_dft(to_complex(img)).data()), 1e-10) << nx << "x" << ny;
    }
}

TEST(Fft, CentreUnitEntryGivesConstantImage) {
    KSpace k(ImageMeta{8, 6, 1.0});
    k(4, 3) = 1.0;
    const RealImage img = ifft2c(k);
    for (double v : img.data()) EXPECT_NEAR(v, 1.0 / std::sqrt(48.0), 1e-12);
}

TEST(Fft, ZeroKspaceGivesZeroImage) {
    const RealImage img = ifft2c(KSpace(ImageMeta{8, 8, 1.0}));
    for (double v : img.data()) EXPECT_EQ(v, 0.0);
}

TEST(Fft, RoundTripParsevalHermitian) {
    Rng rng(11);
    for (int t = 0; t < 40; ++t) {
        const int nx = rng.uniform_int(8, 64), ny = rng.uniform_int(8, 64);
        const RealImage img = random_image(rng, nx, ny);
        const KSpace k = fft2c(img);
        const RealImage back = ifft2c(k);
        double e_img = 0, e_k = 0, err = 0;
        for (std::size_t i = 0; i < img.size(); ++i) {
            e_img += img.data()[i] * img.data()[i];
            e_k += std::norm(k.data()[i]);
            err = std::max(err, std::abs(back.data()[i] - img.data()[i]));
        }
        EXPECT_LT(err, 1e-6 * max_abs(img.data()));
        EXPECT_NEAR(e_k / e_img, 1.0, 1e-6);
        EXPECT_LT(hermitian_defect(k), 1e-6 * max_abs(k.data()));
        EXPECT_LT(imaginary_residue(ifft2c_complex(k)), 1e-5);
    }
}

TEST(Fft, PhantomRoundTrip) {
    const RealImage p = phantom(64);
    const RealImage back = ifft2c(fft2c(p));
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(back.data()[i], p.data()[i], 1e-6);
}

TEST(Fft, Linearity) {
    Rng rng(5);
    const RealImage a = random_image(rng, 16, 12), b = random_image(rng, 16, 12);
    RealImage c(a.meta());
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] = 2.5 * a.data()[i] - 0.75 * b.data()[i];
    const KSpace ka = fft2c(a), kb = fft2c(b), kc = fft2c(c);
    for (std::size_t i = 0; i < kc.size(); ++i) EXPECT_LT(std::abs(kc.data()[i] - (2.5 * ka.data()[i] - 0.75 * kb.data()[i])), 1e-12);
}

TEST(Fft, RejectsNonFiniteInput) {
    RealImage img(ImageMeta{8, 8, 1.0});
    img(3, 2) = std::nan("");
    try {
        fft2c(img);
        FAIL() << "expected rejection";
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::non_finite);
    }
}

TEST(Translate, ZeroShiftIsExactCopy) {
    Rng rng(2);
    const RealImage img = random_image(rng, 9, 7);
    EXPECT_EQ(translate(img, 0.0, 0.0).storage(), img.storage());
}

TEST(Translate, IntegerShiftMovesDelta) {
    RealImage img(ImageMeta{8, 8, 1.0});
    img(3, 3) = 1.0;
    const RealImage out = translate(img, 1.0, 0.0);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) EXPECT_EQ(out(x, y), (x == 4 && y == 3) ? 1.0 : 0.0);
}

TEST(Translate, SpacingConvertsMillimetres) {
    RealImage img(ImageMeta{8, 8, 2.0});
    img(3, 3) = 1.0;
    EXPECT_EQ(translate(img, 0.0, 4.0)(3, 5), 1.0);
}

TEST(Translate, ShiftTheoremOnCompactImage) {
    // Content kept away from the border so zero fill equals circular shift.
    Rng rng(9);
    RealImage img(ImageMeta{16, 16, 1.0});
    for (int y = 4; y < 12; ++y)
        for (int x = 4; x < 12; ++x) img(x, y) = rng.uniform(0.0, 1.0);
    for (int s : {1, 2, -3}) {
        const KSpace k0 = fft2c(img), k1 = fft2c(translate(img, double(s), 0.0));
        for (int ky = 0; ky < 16; ++ky)
            for (int kx = 0; kx < 16; ++kx) {
                const double ph = -2.0 * std::numbers::pi * (kx - 8) * s / 16.0;
                EXPECT_LT(std::abs(k1(kx, ky) - k0(kx, ky) * cplx(std::cos(ph), std::sin(ph))), 1e-5);
                EXPECT_NEAR(std::abs(k1(kx, ky)), std::abs(k0(kx, ky)), 1e-6);
            }
    }
}

TEST(Rotate, ZeroAngleIsExactCopy) {
    Rng rng(4);
    const RealImage img = random_image(rng, 8, 8);
    EXPECT_EQ(rotate(img, 0.0).storage(), img.storage());
}

TEST(Rotate, QuarterTurnIsPermutation) {
    RealImage img(ImageMeta{4, 4, 1.0});
    for (int i = 0; i < 16; ++i) img.data()[static_cast<std::size_t>(i)] = i + 1.0;
    const RealImage r = rotate(img, 90.0);
    // Inverse map: out(x, y) = in(c + c*dx + s*dy, c - s*dx + c*dy), c=cos, s=sin, centre 1.5.
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            const double dx = x - 1.5, dy = y - 1.5;
            const int u = int(std::lround(1.5 + dy)), v = int(std::lround(1.5 - dx));
            EXPECT_EQ(r(x, y), img(u, v));
        }
    // Four quarter turns restore the pattern.
    EXPECT_EQ(rotate(rotate(rotate(r, 90.0), 90.0), 90.0).storage(), img.storage());
}

TEST(Rotate, InverseCompositionOnSmoothImage) {
    RealImage img(ImageMeta{64, 64, 1.0});
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) img(x, y) = std::exp(-((x - 31.5) * (x - 31.5) + (y - 31.5) * (y - 31.5)) / 200.0);
    const RealImage back = rotate(rotate(img, 10.0), -10.0);
    double err = 0.0;
    for (int y = 2; y < 62; ++y)
        for (int x = 2; x < 62; ++x) err = std::max(err, std::abs(back(x, y) - img(x, y)));
    EXPECT_LT(err, 0.05 * max_abs(img.data()));
}

TEST(RigidK, IdentityMotion) {
    const KSpace k = fft2c(phantom(32));
    const KSpace out = apply_rigid_k(k, RigidMotion{});
    EXPECT_LT(max_abs_diff(out.data(), k.data()), 1e-6 * max_abs(k.data()));
}

TEST(RigidK, IntegerTranslationKeepsMagnitude) {
    RealImage img(ImageMeta{32, 32, 1.0});
    Rng rng(1);
    for (int y = 8; y < 24; ++y)
        for (int x = 8; x < 24; ++x) img(x, y) = rng.uniform(0.0, 1.0);
    const KSpace k = fft2c(img);
    const KSpace out = apply_rigid_k(k, RigidMotion{2.0, -3.0, 0.0});
    for (std::size_t i = 0; i < k.size(); ++i) EXPECT_NEAR(std::abs(out.data()[i]), std::abs(k.data()[i]), 1e-6);
}

TEST(RigidK, MatchesImageDomainComposition) {
    const RealImage p = phantom(64);
    const RigidMotion m{1.5, -2.0, 5.0};
    const KSpace got = apply_rigid_k(fft2c(p), m);
    const KSpace ref = naive_dft(to_complex(rotate(translate(p, m.tx_mm, m.ty_mm), m.theta_deg)));
    EXPECT_LT(max_abs_diff(got.data(), ref.data()), 1e-9 * max_abs(ref.data()));
}

TEST(RigidMotion, RejectsLargeAngles) {
    EXPECT_THROW((RigidMotion{0, 0, 181}.validate()), Error);
    EXPECT_NO_THROW((RigidMotion{0, 0, -180}.validate()));
}
