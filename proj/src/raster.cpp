#include "mge/raster.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mge {

namespace {

[[noreturn]] void fail_at(const std::string& path, std::size_t offset, const std::string& what) {
  throw std::runtime_error("raster '" + path + "': " + what + " at byte offset " +
                           std::to_string(offset));
}

struct HeaderParser {
  const std::string& buf;
  const std::string& path;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < buf.size()) {
      const char c = buf[pos];
      if (c == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  }

  int read_int(const char* what) {
    skip_space_and_comments();
    if (pos >= buf.size()) fail_at(path, pos, std::string("missing ") + what);
    if (buf[pos] < '0' || buf[pos] > '9')
      fail_at(path, pos, std::string("expected digit for ") + what);
    long v = 0;
    while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
      v = v * 10 + (buf[pos] - '0');
      if (v > 1'000'000'000L) fail_at(path, pos, std::string(what) + " out of range");
      ++pos;
    }
    return static_cast<int>(v);
  }
};

}  // namespace

Tensor load_raster(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("raster '" + path + "': cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();

  HeaderParser hp{buf, path};
  if (buf.size() < 2) fail_at(path, 0, "missing magic");
  if (buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6'))
    fail_at(path, 0, "bad magic, expected P5 or P6");
  const int channels = buf[1] == '5' ? 1 : 3;
  hp.pos = 2;
  const int width = hp.read_int("width");
  const int height = hp.read_int("height");
  if (width < 1 || height < 1) fail_at(path, hp.pos, "non-positive image size");
  const int maxval = hp.read_int("maxval");
  if (maxval != 255) fail_at(path, hp.pos, "unsupported maxval " + std::to_string(maxval));
  if (hp.pos >= buf.size()) fail_at(path, hp.pos, "missing payload");
  const char sep = buf[hp.pos];
  if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n')
    fail_at(path, hp.pos, "expected single whitespace before payload");
  ++hp.pos;

  const std::size_t expected =
      static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
      static_cast<std::size_t>(channels);
  if (buf.size() - hp.pos < expected)
    fail_at(path, buf.size(), "truncated payload, expected " + std::to_string(expected) +
                                  " bytes from offset " + std::to_string(hp.pos));

  // Payload is row-major with channels interleaved; tensors are planar.
  Tensor img({channels, height, width});
  const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data() + hp.pos);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        img.data[static_cast<std::size_t>(c) * height * width + static_cast<std::size_t>(y) * width + x] =
            static_cast<double>(p[(static_cast<std::size_t>(y) * width + x) * channels + c]) / 255.0;
  return img;
}

void save_raster(const std::string& path, const Tensor& image) {
  if (image.ndim() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
    throw std::runtime_error("save_raster: image must be [1,H,W] or [3,H,W], got " +
                             shape_str(image.shape));
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_raster '" + path + "': cannot open for writing");
  out << (C == 1 ? "P5" : "P6") << "\n" << W << " " << H << "\n255\n";
  std::string payload(static_cast<std::size_t>(C) * H * W, '\0');
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c) {
        double v = image.data[static_cast<std::size_t>(c) * H * W + static_cast<std::size_t>(y) * W + x];
        v = std::lround(std::min(1.0, std::max(0.0, v)) * 255.0);
        payload[(static_cast<std::size_t>(y) * W + x) * C + c] = static_cast<char>(
            static_cast<unsigned char>(v));
      }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("save_raster '" + path + "': write failed");
}

}  // namespace mge
