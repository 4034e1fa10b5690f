#include "ctt/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

namespace ctt {

namespace {

// Reads one ASCII decimal header token, skipping whitespace and # comments.
long read_header_number(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) {
    throw DataError("load_pgm: malformed header in " + path);
  }
  long value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    if (value > 1 << 30) throw DataError("load_pgm: absurd header value in " + path);
    c = in.get();
  }
  if (c != EOF) in.unget();
  return value;
}

}  // namespace

Tensor load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_pgm: cannot open " + path.string());

  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') {
    throw DataError("load_pgm: " + path.string() +
                    " is not a binary PGM (expected magic P5)");
  }
  const long width = read_header_number(in, path.string());
  const long height = read_header_number(in, path.string());
  const long maxval = read_header_number(in, path.string());
  if (width <= 0 || height <= 0) {
    throw DataError("load_pgm: bad extents in " + path.string());
  }
  if (maxval != 255) {
    throw DataError("load_pgm: " + path.string() +
                    " has maxval " + std::to_string(maxval) + ", expected 255");
  }
  // Exactly one whitespace byte separates the header from the raster.
  const int sep = in.get();
  if (sep == EOF || !std::isspace(sep)) {
    throw DataError("load_pgm: missing raster separator in " + path.string());
  }

  const std::size_t count = static_cast<std::size_t>(width) * height;
  std::vector<unsigned char> raw(count);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) {
    throw DataError("load_pgm: truncated payload in " + path.string());
  }

  std::vector<double> pixels(count);
  for (std::size_t i = 0; i < count; ++i) {
    pixels[i] = static_cast<double>(raw[i]) / 255.0;
  }
  return Tensor({static_cast<std::size_t>(height), static_cast<std::size_t>(width)},
                std::move(pixels));
}

void save_pgm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 2) throw ShapeError("save_pgm: image must be [H,W]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_pgm: cannot open " + path.string());
  out << "P5\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
  std::vector<unsigned char> raw(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::clamp(image.at(i), 0.0, 1.0);
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("save_pgm: write failed for " + path.string());
}

Tensor bilinear_resize(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 2) throw ShapeError("bilinear_resize: image must be [H,W]");
  const std::size_t in_h = image.dim(0), in_w = image.dim(1);
  if (out_h == 0 || out_w == 0) {
    throw ShapeError("bilinear_resize: target extents must be positive");
  }
  if (in_h == out_h && in_w == out_w) {
    return Tensor({in_h, in_w}, image.values());
  }
  Tensor out({out_h, out_w});
  const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp((static_cast<double>(oy) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(in_h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp((static_cast<double>(ox) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(in_w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = image.at(y0 * in_w + x0) * (1.0 - wx) +
                         image.at(y0 * in_w + x1) * wx;
      const double bottom = image.at(y1 * in_w + x0) * (1.0 - wx) +
                            image.at(y1 * in_w + x1) * wx;
      out.mutable_values()[oy * out_w + ox] = top * (1.0 - wy) + bottom * wy;
    }
  }
  return out;
}

Tensor load_image(const std::filesystem::path& path, std::size_t target_h,
                  std::size_t target_w) {
  return bilinear_resize(load_pgm(path), target_h, target_w);
}

}  // namespace ctt
