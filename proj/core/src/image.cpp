// Copyright 2026 The dodloc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dodloc/image.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include "dodloc/error.hpp"

namespace dodloc {

Image crop_image(const Image& src, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || x0 + width > src.width || y0 + height > src.height) {
    throw DataError("crop window exceeds source image");
  }
  Image out(width, height);
  for (int y = 0; y < height; ++y) {
    const auto* row = src.pixel(x0, y0 + y);
    std::copy(row, row + static_cast<std::size_t>(width) * 3, out.pixel(0, y));
  }
  return out;
}

void write_ppm(const Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

namespace {

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  // Skip whitespace and '#' comments between header fields.
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c == ' ' || c == '\n' || c == '\r' || c == '\t') {
      in.get();
    } else {
      break;
    }
  }
  int value = 0;
  if (!(in >> value)) throw DataError("malformed PPM header: " + path.string());
  return value;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P6") throw DataError("not a binary PPM: " + path.string());
  const int w = read_header_int(in, path);
  const int h = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (w <= 0 || h <= 0 || maxval != 255) throw DataError("unsupported PPM geometry: " + path.string());
  in.get();  // single whitespace before the raster
  Image image(w, h);
  in.read(reinterpret_cast<char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.rgb.size())) {
    throw DataError("truncated PPM raster: " + path.string());
  }
  return image;
}

}  // namespace dodloc
