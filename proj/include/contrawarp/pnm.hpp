// Copyright 2026 The contrawarp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// 8-bit binary netpbm (P5 grayscale, P6 RGB) and the plain-text landmark
// format ("K" then K lines of "x y").

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "contrawarp/common.hpp"
#include "contrawarp/image.hpp"
#include "contrawarp/landmarks.hpp"

namespace contrawarp {

inline std::uint8_t quantize_u8(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0));
}

inline std::string encode_pnm(const ImageBuffer& img) {
  std::string out = (img.channels() == 1 ? "P5\n" : "P6\n") + std::to_string(img.width()) + " " +
                    std::to_string(img.height()) + "\n255\n";
  out.reserve(out.size() + img.size());
  for (float v : img.data()) out.push_back(static_cast<char>(quantize_u8(v)));
  return out;
}

inline ImageBuffer decode_pnm(std::string_view bytes) {
  std::size_t pos = 0;
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw ParseError("not a binary PGM/PPM file (expected P5 or P6)", 0);
  const int channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space();
    int v = 0;
    const auto* first = bytes.data() + pos;
    const auto [ptr, ec] = std::from_chars(first, bytes.data() + bytes.size(), v);
    if (ec != std::errc() || ptr == first)
      throw ParseError(std::string("malformed PNM header: bad ") + what, pos);
    pos += static_cast<std::size_t>(ptr - first);
    return v;
  };
  const int width = read_int("width");
  const int height = read_int("height");
  const int maxval = read_int("maxval");
  if (width <= 0 || height <= 0) throw ParseError("malformed PNM header: non-positive size", pos);
  if (maxval <= 0 || maxval > 255) throw ParseError("unsupported PNM maxval (8-bit only)", pos);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw ParseError("malformed PNM header: missing separator before payload", pos);
  ++pos;
  const std::size_t need = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() - pos < need)
    throw ParseError("truncated PNM payload: expected " + std::to_string(need) + " bytes, found " +
                         std::to_string(bytes.size() - pos),
                     bytes.size());
  ImageBuffer img(width, height, channels);
  auto data = img.data();
  for (std::size_t i = 0; i < need; ++i)
    data[i] = static_cast<float>(static_cast<std::uint8_t>(bytes[pos + i])) / maxval;
  return img;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline ImageBuffer read_image(const std::filesystem::path& path) {
  try {
    return decode_pnm(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.offset());
  }
}

inline void write_image(const std::filesystem::path& path, const ImageBuffer& img) {
  write_file(path, encode_pnm(img));
}

inline std::string format_g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string encode_landmarks(const LandmarkSet& lms) {
  std::string out = std::to_string(lms.size()) + "\n";
  for (const auto& lm : lms.points) out += format_g6(lm.pos.x) + " " + format_g6(lm.pos.y) + "\n";
  return out;
}

inline LandmarkSet decode_landmarks(std::string_view text) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  };
  auto parse = [&]<typename T>(T& v, const char* what) {
    skip_space();
    const auto* first = text.data() + pos;
    const auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), v);
    if (ec != std::errc() || ptr == first)
      throw ParseError(std::string("landmark file: expected ") + what, pos);
    pos += static_cast<std::size_t>(ptr - first);
  };
  long count = 0;
  parse(count, "point count");
  if (count < 0) throw ParseError("landmark file: negative point count", 0);
  std::vector<Point2> pts(static_cast<std::size_t>(count));
  for (auto& p : pts) {
    parse(p.x, "x coordinate");
    parse(p.y, "y coordinate");
  }
  skip_space();
  if (pos != text.size()) throw ParseError("landmark file: trailing content", pos);
  return LandmarkSet::from_points(pts);
}

inline LandmarkSet read_landmarks(const std::filesystem::path& path) {
  try {
    return decode_landmarks(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.offset());
  }
}

inline void write_landmarks(const std::filesystem::path& path, const LandmarkSet& lms) {
  write_file(path, encode_landmarks(lms));
}

}  // namespace contrawarp
