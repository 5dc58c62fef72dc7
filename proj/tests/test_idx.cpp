#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "diffce/idx.hpp"

using diffce::load_idx;

namespace {

void write_u32_be(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>((v >> 24) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>(v & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

struct TempFile {
  std::string path;
  explicit TempFile(const char* name) : path(std::string("idx_test_") + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

// Two 2x3 images with pixel value = its flat index scaled by 20.
void write_image_fixture(const std::string& path, std::uint32_t magic,
                         std::uint32_t n = 2, bool truncate = false) {
  std::ofstream out(path, std::ios::binary);
  write_u32_be(out, magic);
  write_u32_be(out, n);
  write_u32_be(out, 2);  // rows
  write_u32_be(out, 3);  // cols
  const std::size_t total = truncate ? 9 : 12;
  for (std::size_t i = 0; i < total; ++i) {
    const char c = static_cast<char>(static_cast<unsigned char>(20 * (i % 12)));
    out.write(&c, 1);
  }
}

void write_label_fixture(const std::string& path, std::uint32_t magic,
                         const std::vector<unsigned char>& labels) {
  std::ofstream out(path, std::ios::binary);
  write_u32_be(out, magic);
  write_u32_be(out, static_cast<std::uint32_t>(labels.size()));
  for (unsigned char c : labels)
    out.write(reinterpret_cast<const char*>(&c), 1);
}

}  // namespace

TEST_CASE("idx pair loads with pixels scaled to [0, 1]") {
  TempFile img("ok-images"), lab("ok-labels");
  write_image_fixture(img.path, 0x00000803u);
  write_label_fixture(lab.path, 0x00000801u, {7, 3});
  const auto ds = load_idx(img.path, lab.path);
  CHECK(ds.rows == 2);
  CHECK(ds.cols == 3);
  CHECK(ds.images.rows() == 6);
  CHECK(ds.images.cols() == 2);
  for (int i = 0; i < 6; ++i) {
    CHECK(ds.images(i, 0) == doctest::Approx(20.0 * i / 255.0).epsilon(1e-12));
    CHECK(ds.images(i, 1) ==
          doctest::Approx(20.0 * (i + 6) / 255.0).epsilon(1e-12));
  }
  CHECK(ds.labels[0] == 7);
  CHECK(ds.labels[1] == 3);
  CHECK(ds.images.maxCoeff() <= 1.0);
  CHECK(ds.images.minCoeff() >= 0.0);
}

TEST_CASE("corrupt image magic is reported with file and offset") {
  TempFile img("badmagic-images"), lab("badmagic-labels");
  write_image_fixture(img.path, 0x00000804u);
  write_label_fixture(lab.path, 0x00000801u, {0, 1});
  CHECK_THROWS_WITH_AS((void)load_idx(img.path, lab.path),
                       doctest::Contains("bad image magic 0x00000804"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS((void)load_idx(img.path, lab.path),
                       doctest::Contains((img.path + " at byte 0").c_str()),
                       std::runtime_error);
}

TEST_CASE("label magic and count mismatches are rejected") {
  TempFile img("count-images"), lab("count-labels");
  write_image_fixture(img.path, 0x00000803u);
  write_label_fixture(lab.path, 0x00000802u, {0, 1});
  CHECK_THROWS_WITH_AS((void)load_idx(img.path, lab.path),
                       doctest::Contains("bad label magic"),
                       std::runtime_error);
  write_label_fixture(lab.path, 0x00000801u, {0, 1, 2});
  CHECK_THROWS_WITH_AS(
      (void)load_idx(img.path, lab.path),
      doctest::Contains("label count 3 does not match image count 2"),
      std::runtime_error);
}

TEST_CASE("truncated payloads are reported at their byte offset") {
  TempFile img("trunc-images"), lab("trunc-labels");
  write_image_fixture(img.path, 0x00000803u, 2, /*truncate=*/true);
  write_label_fixture(lab.path, 0x00000801u, {0, 1});
  // second image starts at byte 16 + 6
  CHECK_THROWS_WITH_AS((void)load_idx(img.path, lab.path),
                       doctest::Contains("at byte 22"), std::runtime_error);
  CHECK_THROWS_WITH_AS((void)load_idx(img.path, lab.path),
                       doctest::Contains("image 1"), std::runtime_error);

  write_image_fixture(img.path, 0x00000803u);
  write_label_fixture(lab.path, 0x00000801u, {0});
  {
    // claim two labels but provide one
    std::ofstream out(lab.path, std::ios::binary | std::ios::trunc);
    write_u32_be(out, 0x00000801u);
    write_u32_be(out, 2);
    const char c = 0;
    out.write(&c, 1);
  }
  CHECK_THROWS_WITH_AS((void)load_idx(img.path, lab.path),
                       doctest::Contains("label 1"), std::runtime_error);
}

TEST_CASE("missing files raise cannot-open errors") {
  TempFile img("gone-images"), lab("gone-labels");
  write_image_fixture(img.path, 0x00000803u);
  CHECK_THROWS_WITH_AS((void)load_idx("idx_test_nope", lab.path),
                       doctest::Contains("cannot open"), std::runtime_error);
  CHECK_THROWS_WITH_AS((void)load_idx(img.path, "idx_test_nope"),
                       doctest::Contains("cannot open"), std::runtime_error);
}
