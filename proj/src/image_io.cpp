#include "vrl/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vrl {

namespace {

void read_pnm_header(std::ifstream& f, const std::string& path, const char* magic, int& w, int& h,
                     int& maxval) {
  std::string m;
  f >> m;
  if (m != magic) throw std::runtime_error(path + ": expected " + magic + " header");
  f >> w >> h >> maxval;
  if (!f || w <= 0 || h <= 0) throw std::runtime_error(path + ": bad PNM header");
  f.get();  // single whitespace before binary payload
}

}  // namespace

void write_ppm(const std::string& path, const Frame& frame) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << "P6\n" << frame.width << ' ' << frame.height << "\n255\n";
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v01 = (std::clamp(frame.at(c, y, x), -1.0f, 1.0f) + 1.0f) * 0.5f;
        f.put(static_cast<char>(std::lround(v01 * 255.0f)));
      }
  if (!f) throw std::runtime_error("PPM write failed: " + path);
}

Frame read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for read: " + path);
  int w, h, maxval;
  read_pnm_header(f, path, "P6", w, h, maxval);
  if (maxval != 255) throw std::runtime_error(path + ": only maxval 255 supported");
  Frame frame;
  frame.width = w;
  frame.height = h;
  frame.data.assign(static_cast<size_t>(3 * w * h), 0.f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const int byte = f.get();
        if (byte < 0) throw std::runtime_error(path + ": truncated PPM");
        frame.at(c, y, x) = static_cast<float>(byte) / 255.0f * 2.0f - 1.0f;
      }
  return frame;
}

void write_pgm(const std::string& path, const SegMap& seg) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << "P5\n" << seg.width << ' ' << seg.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(seg.labels.data()),
          static_cast<std::streamsize>(seg.labels.size()));
  if (!f) throw std::runtime_error("PGM write failed: " + path);
}

SegMap read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for read: " + path);
  int w, h, maxval;
  read_pnm_header(f, path, "P5", w, h, maxval);
  SegMap seg;
  seg.width = w;
  seg.height = h;
  seg.labels.assign(static_cast<size_t>(w * h), 0);
  f.read(reinterpret_cast<char*>(seg.labels.data()), static_cast<std::streamsize>(seg.labels.size()));
  if (!f) throw std::runtime_error(path + ": truncated PGM");
  return seg;
}

}  // namespace vrl
