#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "gltd/image.hpp"
#include "gltd/rng.hpp"
#include "oracles.hpp"

using gltd::Image;
using gltd::Rng;

namespace {

Image random_image(std::size_t h, std::size_t w, Rng& rng) {
    Image im = Image::zeros(h, w);
    for (auto& v : im.data) v = rng.uniform();
    return im;
}

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "gltd_image_test";
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("bilinear sampling matches the direct four-corner formula") {
    Rng rng(11);
    const Image im = random_image(9, 13, rng);
    for (int i = 0; i < 200; ++i) {
        const double x = rng.uniform(-2.0, 15.0);
        const double y = rng.uniform(-2.0, 11.0);
        const auto c = static_cast<std::size_t>(rng.uniform_int(3));
        REQUIRE(gltd::sample_bilinear(im, x, y, c) ==
                Catch::Approx(oracles::brute_bilinear(im, x, y, c)).margin(1e-12));
    }
}

TEST_CASE("bilinear sampling at pixel centers returns exact stored values") {
    Rng rng(12);
    const Image im = random_image(5, 7, rng);
    for (std::size_t y = 0; y < im.height; ++y)
        for (std::size_t x = 0; x < im.width; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                REQUIRE(gltd::sample_bilinear(im, static_cast<double>(x) + 0.5,
                                              static_cast<double>(y) + 0.5, c) == im.at(y, x, c));
}

TEST_CASE("bilinear sampling clamps at the borders") {
    Rng rng(13);
    const Image im = random_image(4, 4, rng);
    REQUIRE(gltd::sample_bilinear(im, -10.0, -10.0, 0) == im.at(0, 0, 0));
    REQUIRE(gltd::sample_bilinear(im, 100.0, 100.0, 1) == im.at(3, 3, 1));
}

TEST_CASE("luma uses the standard weights and clamp01 clamps") {
    REQUIRE(gltd::luma(1.0, 0.0, 0.0) == Catch::Approx(0.299));
    REQUIRE(gltd::luma(0.0, 1.0, 0.0) == Catch::Approx(0.587));
    REQUIRE(gltd::luma(0.0, 0.0, 1.0) == Catch::Approx(0.114));
    REQUIRE(gltd::luma(1.0, 1.0, 1.0) == Catch::Approx(1.0));
    REQUIRE(gltd::clamp01(-0.5) == 0.0);
    REQUIRE(gltd::clamp01(1.5) == 1.0);
    REQUIRE(gltd::clamp01(0.25) == 0.25);
}

TEST_CASE("image/tensor bridge round-trips") {
    Rng rng(14);
    const Image im = random_image(6, 5, rng);
    const gltd::Tensor t = gltd::image_to_tensor(im);
    REQUIRE(t.shape == std::vector<std::size_t>{6, 5, 3});
    const Image back = gltd::image_from_tensor(t);
    REQUIRE(back.height == im.height);
    REQUIRE(back.width == im.width);
    REQUIRE(back.data == im.data);
}

TEST_CASE("image files round-trip losslessly") {
    Rng rng(15);
    const Image im = random_image(8, 3, rng);
    const auto path = (temp_dir() / "img.gltd").string();
    gltd::write_image_file(path, im);
    const Image back = gltd::read_image_file(path);
    REQUIRE(back.height == im.height);
    REQUIRE(back.width == im.width);
    REQUIRE(back.data == im.data);
}

TEST_CASE("ppm reader handles comments and whitespace") {
    const auto path = (temp_dir() / "hand.ppm").string();
    {
        std::ofstream f(path, std::ios::binary);
        f << "P6\n# a comment\n2 # width then height\n1\n# maxval next\n255\n";
        const unsigned char px[6] = {255, 0, 0, 0, 128, 255};
        f.write(reinterpret_cast<const char*>(px), 6);
    }
    const Image im = gltd::read_ppm(path);
    REQUIRE(im.height == 1);
    REQUIRE(im.width == 2);
    REQUIRE(im.at(0, 0, 0) == Catch::Approx(1.0));
    REQUIRE(im.at(0, 0, 1) == Catch::Approx(0.0));
    REQUIRE(im.at(0, 1, 1) == Catch::Approx(128.0 / 255.0));
    REQUIRE(im.at(0, 1, 2) == Catch::Approx(1.0));
}

TEST_CASE("ppm write/read round-trips up to 8-bit quantization") {
    Rng rng(16);
    const Image im = random_image(7, 9, rng);
    const auto path = (temp_dir() / "rt.ppm").string();
    gltd::write_ppm(path, im);
    const Image back = gltd::read_ppm(path);
    REQUIRE(back.height == im.height);
    REQUIRE(back.width == im.width);
    for (std::size_t i = 0; i < im.data.size(); ++i)
        REQUIRE(back.data[i] == Catch::Approx(im.data[i]).margin(1.0 / 255.0));
}

TEST_CASE("ppm reader rejects other formats and bad headers") {
    const auto dir = temp_dir();
    const auto p3 = (dir / "bad.ppm").string();
    {
        std::ofstream f(p3, std::ios::binary);
        f << "P3\n1 1\n255\n255 0 0\n";
    }
    REQUIRE_THROWS_AS(gltd::read_ppm(p3), gltd::ConfigError);

    const auto trunc = (dir / "trunc.ppm").string();
    {
        std::ofstream f(trunc, std::ios::binary);
        f << "P6\n2 2\n255\nab";
    }
    REQUIRE_THROWS_AS(gltd::read_ppm(trunc), gltd::ConfigError);
}
