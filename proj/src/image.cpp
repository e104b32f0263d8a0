#include "evpano/image.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

namespace evpano {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

int header_int(std::istream& in, const std::string& path) {
  const std::string tok = header_token(in);
  try {
    return std::stoi(tok);
  } catch (const std::exception&) {
    throw std::runtime_error("bad PGM header in " + path);
  }
}

}  // namespace

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image: " + path);
  const std::string magic = header_token(in);
  if (magic != "P5" && magic != "P2") throw std::runtime_error("not a PGM (P2/P5) image: " + path);

  GrayImage img;
  img.width = header_int(in, path);
  img.height = header_int(in, path);
  img.maxval = header_int(in, path);
  if (img.width <= 0 || img.height <= 0 || img.maxval <= 0 || img.maxval > 65535)
    throw std::runtime_error("bad PGM dimensions in " + path);

  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  img.pixels.resize(n);
  if (magic == "P2") {
    for (auto& p : img.pixels) p = static_cast<std::uint16_t>(header_int(in, path));
  } else if (img.maxval < 256) {
    std::vector<unsigned char> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("truncated PGM: " + path);
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = raw[i];
  } else {
    std::vector<unsigned char> raw(2 * n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(2 * n));
    if (!in) throw std::runtime_error("truncated PGM: " + path);
    for (std::size_t i = 0; i < n; ++i)
      img.pixels[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  }
  for (auto p : img.pixels)
    if (p > img.maxval) throw std::runtime_error("PGM pixel above maxval: " + path);
  return img;
}

void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n" << img.maxval << "\n";
  if (img.maxval < 256) {
    std::vector<unsigned char> raw(img.pixels.begin(), img.pixels.end());
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  } else {
    std::vector<unsigned char> raw;
    raw.reserve(2 * img.pixels.size());
    for (auto p : img.pixels) {
      raw.push_back(static_cast<unsigned char>(p >> 8));
      raw.push_back(static_cast<unsigned char>(p & 0xff));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  }
  if (!out) throw std::runtime_error("failed writing image: " + path);
}

}  // namespace evpano
