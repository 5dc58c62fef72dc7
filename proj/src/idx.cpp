#include "diffce/idx.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffce {

namespace {

[[noreturn]] void fail(const std::string& path, std::streamoff offset,
                       const std::string& msg) {
  throw std::runtime_error("idx: " + path + " at byte " +
                           std::to_string(offset) + ": " + msg);
}

std::string hexstring(std::uint32_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(8, '0');
  for (int i = 7; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::uint32_t read_u32_be(std::ifstream& in, const std::string& path) {
  const std::streamoff at = in.tellg();
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) fail(path, at, "unexpected end of file reading a 32-bit field");
  return (static_cast<std::uint32_t>(b[0]) << 24) |
         (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) |
         static_cast<std::uint32_t>(b[3]);
}

}  // namespace

IdxDataset load_idx(const std::string& images_path,
                    const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("idx: cannot open " + images_path);
  const std::uint32_t img_magic = read_u32_be(img, images_path);
  if (img_magic != 0x00000803u)
    fail(images_path, 0,
         "bad image magic 0x" + hexstring(img_magic) +
             ", expected 0x00000803");
  const std::uint32_t n = read_u32_be(img, images_path);
  const std::uint32_t rows = read_u32_be(img, images_path);
  const std::uint32_t cols = read_u32_be(img, images_path);
  if (n == 0 || rows == 0 || cols == 0)
    fail(images_path, 4, "zero-sized image dimensions");

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("idx: cannot open " + labels_path);
  const std::uint32_t lab_magic = read_u32_be(lab, labels_path);
  if (lab_magic != 0x00000801u)
    fail(labels_path, 0,
         "bad label magic 0x" + hexstring(lab_magic) +
             ", expected 0x00000801");
  const std::uint32_t n_lab = read_u32_be(lab, labels_path);
  if (n_lab != n)
    fail(labels_path, 4,
         "label count " + std::to_string(n_lab) +
             " does not match image count " + std::to_string(n));

  IdxDataset ds;
  ds.rows = static_cast<int>(rows);
  ds.cols = static_cast<int>(cols);
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  ds.images.resize(static_cast<Eigen::Index>(pixels),
                   static_cast<Eigen::Index>(n));
  std::vector<unsigned char> buf(pixels);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::streamoff at = img.tellg();
    img.read(reinterpret_cast<char*>(buf.data()),
             static_cast<std::streamsize>(pixels));
    if (!img)
      fail(images_path, at,
           "unexpected end of file in image " + std::to_string(i));
    for (std::size_t p = 0; p < pixels; ++p)
      ds.images(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i)) =
          buf[p] / 255.0;
  }
  ds.labels.resize(static_cast<Eigen::Index>(n));
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::streamoff at = lab.tellg();
    char c;
    lab.read(&c, 1);
    if (!lab)
      fail(labels_path, at,
           "unexpected end of file in label " + std::to_string(i));
    ds.labels[static_cast<Eigen::Index>(i)] =
        static_cast<int>(static_cast<unsigned char>(c));
  }
  return ds;
}

}  // namespace diffce
