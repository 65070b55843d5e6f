#include "npgd/pgm.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>

#include "npgd/error.hpp"

namespace npgd {

void write_pgm(const PgmImage& img, const std::filesystem::path& path) {
  if (img.samples.size() != img.width * img.height) throw ShapeError("write_pgm: sample count mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "P5\n" << img.width << ' ' << img.height << '\n' << img.maxval << '\n';
  const bool wide = img.maxval > 255;
  std::string buf;
  buf.reserve(img.samples.size() * (wide ? 2 : 1));
  for (auto s : img.samples) {
    if (wide) buf.push_back(char(s >> 8));
    buf.push_back(char(s & 0xFF));
  }
  os.write(buf.data(), std::streamsize(buf.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(char(c));
  }
  return tok;
}

std::size_t parse_positive(const std::string& s, const std::filesystem::path& path) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size() || v <= 0) throw FormatError("");
    return std::size_t(v);
  } catch (const std::exception&) {
    throw FormatError("bad PGM header field '" + s + "' in " + path.string());
  }
}

}  // namespace

PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  const std::string magic = token(is);
  if (magic != "P5" && magic != "P2") throw FormatError(path.string() + " is not a P2/P5 PGM file");
  PgmImage img;
  img.width = parse_positive(token(is), path);
  img.height = parse_positive(token(is), path);
  const std::size_t maxval = parse_positive(token(is), path);
  if (maxval > 65535) throw FormatError("PGM maxval out of range in " + path.string());
  img.maxval = std::uint16_t(maxval);
  const std::size_t n = img.width * img.height;
  img.samples.resize(n);
  if (magic == "P5") {
    const bool wide = maxval > 255;
    std::string buf(n * (wide ? 2 : 1), '\0');
    is.read(buf.data(), std::streamsize(buf.size()));
    if (std::size_t(is.gcount()) != buf.size()) throw FormatError("truncated PGM data in " + path.string());
    for (std::size_t i = 0; i < n; ++i) {
      img.samples[i] = wide ? std::uint16_t((std::uint8_t(buf[2 * i]) << 8) | std::uint8_t(buf[2 * i + 1]))
                            : std::uint8_t(buf[i]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::string t = token(is);
      if (t.empty()) throw FormatError("truncated PGM data in " + path.string());
      img.samples[i] = std::uint16_t(std::stoul(t));
    }
  }
  for (auto s : img.samples) {
    if (s > img.maxval) throw FormatError("PGM sample exceeds maxval in " + path.string());
  }
  return img;
}

}  // namespace npgd
